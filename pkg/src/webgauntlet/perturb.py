"""Seeded perturbations: perception (chaos, noise), semantic (remap gate,
rule banner), and execution (silent drops, pop-up modals).

Each perturbation wraps exactly one stage of the step pipeline and draws
every decision from a stream keyed by (seed, session, step, purpose), so
decisions never shift when unrelated draws are added. Canonical state is
never touched here: perception modes transform only what the agent sees,
execution modes only whether/when transitions land.

Provenance dicts (node_id -> caller-supplied entry) are carried through
opaquely: surviving nodes keep their entry, inserted wrappers inherit the
enclosing element's entry, and decoys get none, which makes them inert.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dom import DomNode, DomTree, TreeBuilder, copy_node, renumber
from .rng import RngStream

MODES = ("clean", "chaos", "noise", "failure", "popup", "remapE", "remap")

DROPPABLE_ACTIONS = ("CLICK", "FILL", "TYPE")  # WAIT/HOTKEY/DONE/FAIL are exempt


@dataclass(frozen=True)
class PerturbConfig:
    mode: str = "clean"
    seed: int = 0
    failure_p: float = 0.35
    popup_f: float = 0.30
    chaos_magnitude: float = 0.5
    noise_density: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("failure_p", "popup_f", "chaos_magnitude", "noise_density"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")

    def to_wire(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "failure_p": self.failure_p,
            "popup_f": self.popup_f,
            "chaos_magnitude": self.chaos_magnitude,
            "noise_density": self.noise_density,
        }


MODAL_VARIANTS = ("confirm_ok", "decline_offer", "close_icon")

_MODAL_PROMPTS = {
    "confirm_ok": ("Your session is about to expire. Stay signed in?", "OK"),
    "decline_offer": ("Join our rewards program for 10% off today!", "No thanks"),
    "close_icon": ("You have 1 new notification.", "×"),
}


@dataclass(frozen=True)
class ModalDescriptor:
    variant: str
    prompt: str
    dismiss_key: str

    @staticmethod
    def for_variant(variant: str) -> ModalDescriptor:
        prompt, _label = _MODAL_PROMPTS[variant]
        return ModalDescriptor(
            variant=variant, prompt=prompt, dismiss_key=f"modal-{variant}"
        )

    @property
    def dismiss_label(self) -> str:
        return _MODAL_PROMPTS[self.variant][1]


# --- perception: DOM transforms --------------------------------------------


def perturb_dom(
    tree: DomTree, provenance: dict[int, object], config: PerturbConfig, rng: RngStream
) -> tuple[DomTree, dict[int, object]]:
    """Transform the canonical tree for agent eyes; canonical ids survive
    through the returned provenance map."""
    if config.mode == "chaos":
        return _apply_chaos(tree, provenance, config, rng)
    if config.mode == "noise":
        return _apply_noise(tree, provenance, config, rng)
    return DomTree(copy_node(tree.root)), dict(provenance)


def _apply_chaos(
    tree: DomTree, provenance: dict[int, object], config: PerturbConfig, rng: RngStream
) -> tuple[DomTree, dict[int, object]]:
    """Style distortion: font-size scale, rotation, translation offsets."""
    root = copy_node(tree.root)
    p = config.chaos_magnitude * 0.4
    for node in _preorder(root):
        if not node.is_element() or node.tag in ("html", "body"):
            continue
        if rng.next_bool(p):
            scale = round(rng.next_range(0.6, 1.8), 2)
            angle = round(rng.next_range(-15.0, 15.0), 1)
            dx = int(rng.next_range(-40.0, 40.0))
            dy = int(rng.next_range(-40.0, 40.0))
            node.attributes["style"] = (
                f"font-size:{scale}em;"
                f"transform:rotate({angle}deg) translate({dx}px,{dy}px)"
            )
    return DomTree(root), dict(provenance)


_JUNK_TOKENS = ("a7", "trk", "v2", "promo", "x0", "tmp")

_DECOY_SHAPES = (
    "Click here: {text}",
    "{text} (sponsored)",
    "Hurry! {text} ends soon",
    "Free {text}",
)


def _apply_noise(
    tree: DomTree, provenance: dict[int, object], config: PerturbConfig, rng: RngStream
) -> tuple[DomTree, dict[int, object]]:
    """Text fragmentation, hidden decoys, and attribute junk.

    id attributes and concatenated text content are never altered; decoys
    carry no provenance and therefore no behavior.
    """
    density = config.noise_density
    builder = TreeBuilder()
    noted: list[tuple[DomNode, object]] = []

    def rebuild(node: DomNode) -> list[DomNode]:
        if not node.is_element():
            return [builder.text(node.text)]

        attributes = dict(node.attributes)
        if node.tag not in ("html", "body") and rng.next_bool(density):
            token = _JUNK_TOKENS[rng.next_int(len(_JUNK_TOKENS))]
            attributes[f"data-zx{rng.next_int(9)}"] = token
            if "class" in attributes:
                suffix = rng.next_int(10)
                attributes["class"] = " ".join(
                    f"{name}-x{suffix}" for name in attributes["class"].split()
                )

        children: list[DomNode] = []
        for child in node.children:
            if (
                child.kind == "text"
                and len(child.text) >= 6
                and child.text.strip()
                and rng.next_bool(density)
            ):
                for piece in _split_text(child.text, rng):
                    wrapper = builder.element("span", children=[builder.text(piece)])
                    noted.append((wrapper, provenance.get(node.node_id)))
                    children.append(wrapper)
            else:
                children.extend(rebuild(child))

        rebuilt = builder.element(node.tag, attributes, children)
        noted.append((rebuilt, provenance.get(node.node_id)))
        out = [rebuilt]
        if _decoy_eligible(node) and rng.next_bool(density):
            out.append(_make_decoy(node, rng, builder))
        return out

    new_root = rebuild(tree.root)[0]
    renumber(new_root)
    result = DomTree(new_root)
    id_prov = {
        node.node_id: entry for node, entry in noted if entry is not None
    }
    return result, id_prov


def _split_text(text: str, rng: RngStream) -> list[str]:
    pieces = min(2 + rng.next_int(3), len(text))  # 2..4 adjacent wrappers
    cuts: set[int] = set()
    while len(cuts) < pieces - 1:
        cuts.add(1 + rng.next_int(len(text) - 1))
    bounds = [0, *sorted(cuts), len(text)]
    return [text[a:b] for a, b in zip(bounds, bounds[1:])]


def _decoy_eligible(node: DomNode) -> bool:
    if node.tag in ("button", "a"):
        return True
    return "row" in node.class_list()


def _make_decoy(original: DomNode, rng: RngStream, builder: TreeBuilder) -> DomNode:
    attributes = {
        name: value for name, value in original.attributes.items() if name != "id"
    }
    attributes["style"] = "display:none"
    shape = _DECOY_SHAPES[rng.next_int(len(_DECOY_SHAPES))]
    text = shape.format(text=original.full_text().strip() or original.tag)
    return builder.element(original.tag, attributes, [builder.text(text)])


def _preorder(root: DomNode):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


# --- noise serializer pass: over-encoding ----------------------------------


def over_encode(tree: DomTree, rng: RngStream, density: float) -> str:
    """Serialize with mild content over-encoding: printable characters in
    text and attribute values are re-emitted as numeric character
    references. Decodes back to the canonical content exactly."""
    out: list[str] = []
    p = density * 0.25

    def emit_text(value: str, in_attr: bool) -> None:
        for ch in value:
            if ch == "&":
                out.append("&amp;")
            elif ch == "<":
                out.append("&lt;")
            elif ch == ">":
                out.append("&gt;")
            elif ch == '"' and in_attr:
                out.append("&quot;")
            elif ch.isalnum() and ch.isascii() and rng.next_bool(p):
                out.append(f"&#{ord(ch)};")
            else:
                out.append(ch)

    def walk(node: DomNode) -> None:
        if not node.is_element():
            emit_text(node.text, in_attr=False)
            return
        out.append(f"<{node.tag}")
        for name in sorted(node.attributes):
            out.append(f' {name}="')
            emit_text(node.attributes[name], in_attr=True)
            out.append('"')
        out.append(">")
        if node.tag in ("br", "img", "input", "hr"):
            return
        for child in node.children:
            walk(child)
        out.append(f"</{node.tag}>")

    walk(tree.root)
    return "".join(out)


# --- semantic: rule banner and double-click gate ----------------------------

RULE_BANNER_TEXT = (
    "Notice: on this site, buttons and links need two clicks. "
    "The first click selects the control; a second click on the same "
    "control activates it."
)


def inject_rule_banner(
    tree: DomTree, provenance: dict[int, object]
) -> tuple[DomTree, dict[int, object]]:
    """Prepend the explicit-rule banner to the page body (remapE only)."""
    root = copy_node(tree.root)
    body = next((c for c in root.children if c.tag == "body"), root)
    builder = TreeBuilder()
    banner = builder.element(
        "div", {"class": "rule-banner"}, [builder.text(RULE_BANNER_TEXT)]
    )
    kept = [
        (node, provenance[node.node_id])
        for node in _preorder(root)
        if node.node_id in provenance
    ]
    body.children.insert(0, banner)
    renumber(root)
    new_prov = {node.node_id: entry for node, entry in kept}
    return DomTree(root), new_prov


def remap_gate(state, element_key: str | None, remap_set: frozenset[str]) -> str:
    """Gate a resolved CLICK in remap modes.

    Returns "fire" (second consecutive click on the selected element —
    apply the effect), "select" (first click — selection only), or "pass"
    (element not remapped; any prior selection is cleared).
    """
    if element_key is not None and element_key in remap_set:
        if state.selected_key == element_key:
            state.selected_key = None
            return "fire"
        state.selected_key = element_key
        return "select"
    state.selected_key = None
    return "pass"


def remap_interrupt(state) -> None:
    """Any non-CLICK action breaks double-click immediacy."""
    state.selected_key = None


# --- execution: silent drops and pop-ups -----------------------------------


def inject_failure(rng: RngStream, config: PerturbConfig, action_type: str) -> bool:
    """Bernoulli(failure_p) drop decision for one droppable action."""
    if action_type not in DROPPABLE_ACTIONS:
        return False
    return rng.next_bool(config.failure_p)


def maybe_spawn_popup(config: PerturbConfig, rng: RngStream) -> ModalDescriptor | None:
    """Draw whether a modal opens after a state-changing transition, and
    which variant. The caller checks the preconditions (popup mode, executed
    outcome with a state change, no modal already open)."""
    if not rng.next_bool(config.popup_f):
        return None
    variant = MODAL_VARIANTS[rng.next_int(len(MODAL_VARIANTS))]
    return ModalDescriptor.for_variant(variant)
