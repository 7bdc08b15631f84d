"""One-shot generator for the frozen perturbation snapshots in test_perturb.py.

Run from the repository root:

    python3 tests/gen_snapshots.py

The printed values were pasted into TestNoiseSnapshot and
TestPopupVariantSnapshot once and committed; re-run only if the sampling
procedure itself changes, and treat any diff as a breaking change to
reproducibility.
"""

from __future__ import annotations

from webgauntlet import kernel
from webgauntlet.catalog import get_site
from webgauntlet.perturb import PerturbConfig, maybe_spawn_popup, perturb_dom
from webgauntlet.rng import RngStream


def noise_profile() -> dict:
    site = get_site("shop")
    state = kernel.reset(site)
    tree, prov = kernel.render(site, state)
    config = PerturbConfig(mode="noise", seed=42)
    rng = RngStream(42, "shop:noise", 1, "perturb")
    noisy, _ = perturb_dom(tree, prov, config, rng)

    decoys = 0
    fragments = 0
    junk: list[str] = []
    for node in noisy.nodes():
        if node.kind != "element":
            continue
        if node.attributes.get("style") == "display:none":
            decoys += 1
        if node.tag == "span" and not node.attributes:
            fragments += 1
        junk.extend(sorted(n for n in node.attributes if n.startswith("data-zx")))
    return {
        "node_count": len(noisy),
        "decoy_count": decoys,
        "fragment_wrapper_count": fragments,
        "junk_attributes": junk,
    }


def popup_variants() -> list[str]:
    config = PerturbConfig(mode="popup", seed=7, popup_f=1.0)
    out = []
    for step in range(1, 31):
        modal = maybe_spawn_popup(config, RngStream(7, "shop:popup", step, "popup"))
        out.append(modal.variant)
    return out


if __name__ == "__main__":
    print("noise_profile =", noise_profile())
    print("popup_variants =", popup_variants())
