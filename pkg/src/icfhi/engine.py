"""Bottom-up health index evaluation over an ICF code tree.

Qualifier records are attached to a fresh copy of the tree skeleton, each
carrying a time weight gamma**age, the rule reliability, and a source
uniqueness factor 1/z when the same source feeds z sibling codes under one
parent.  Evaluation then walks levels from the deepest up to the synthetic
root: a node with children aggregates its own (direct) qualifiers with
weight alpha*r, its children's still-unconsumed (indirect) qualifiers with
weight alpha*r*u, and its children's already-calculated values with weight
alpha*r, all weights normalized to sum to one.  The node value is the
tuning curve applied to the weighted mean; the node's alpha and r are the
same weighted means over the contributing alpha and r values.

Once a node's value is calculated, its own qualifiers count as consumed so
ancestors see that node only through its calculated value; a parent also
consumes its children's qualifiers, so every record reaches the root along
exactly one path.  The raw root value in [0, 4] is inverted and scaled to
the 0-100 health index.  After evaluation the tree is restored, so repeated
evaluations of the same attached tree are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .codes import IcfTree, Node, build_tree
from .errors import EvaluationError
from .linkage import QualifierRecord
from .weighting import WeightingSpec, apply_curve, normalize_weights

RAW_MIN, RAW_MAX = 0.0, 4.0


@dataclass(frozen=True)
class AttachedQualifier:
    """One qualifier sitting on a tree node during an evaluation."""

    value: float
    alpha: float
    reliability: float
    source_id: str
    uniqueness: float = 1.0


@dataclass(frozen=True)
class NodeResult:
    """Calculated (x, alpha, r) triple of a node."""

    x: float
    alpha: float
    reliability: float


@dataclass(frozen=True)
class HealthIndex:
    value: int
    raw: float
    evaluated_at: int


@dataclass(frozen=True)
class ComponentScore:
    component: str
    value: int
    raw: float


@dataclass(frozen=True)
class HealthProfile:
    """Scaled score per ICF component; components without data are absent."""

    scores: dict[str, ComponentScore]

    def __contains__(self, component: str) -> bool:
        return component in self.scores

    def __getitem__(self, component: str) -> ComponentScore:
        return self.scores[component]


@dataclass(frozen=True)
class NodeAudit:
    """Per-node evaluation diagnostics: the normalized contribution weights."""

    code: str  # "" for the root
    normalized_weights: tuple[float, ...]
    result: NodeResult


@dataclass(frozen=True)
class EvaluationReport:
    index: HealthIndex
    alpha: float
    reliability: float
    profile: HealthProfile
    audits: tuple[NodeAudit, ...] | None = None


def nint(value: float) -> int:
    """Nearest integer, halves rounded away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def scale_index(raw: float, min_raw: float = RAW_MIN, max_raw: float = RAW_MAX) -> int:
    """Invert and scale a raw value onto the 0 (worst) - 100 (best) index."""
    if max_raw <= min_raw:
        raise EvaluationError(f"degenerate scaling bounds [{min_raw}, {max_raw}]")
    return nint(100.0 - 100.0 * (raw - min_raw) / (max_raw - min_raw))


def attach(
    tree: IcfTree,
    records: Iterable[QualifierRecord],
    reference_day: int,
    spec: WeightingSpec,
) -> IcfTree:
    """Attach qualifier records to a fresh copy of ``tree``.

    Each record's time weight is gamma**(reference_day - day).  After all
    records are placed, source uniqueness is derived per parent: a source
    linked to z qualifiers across sibling children gets u = 1/z on each.
    """
    evaluation = tree.copy_skeleton()
    for record in records:
        if record.code not in evaluation:
            raise EvaluationError(
                f"record for ICF code {record.code.text} which is not in the tree"
            )
        if record.day > reference_day:
            raise EvaluationError(
                f"record on day {record.day} is newer than reference day {reference_day}"
            )
        node = evaluation.node_for(record.code)
        node.attached.append(
            AttachedQualifier(
                value=float(record.value),
                alpha=spec.gamma ** (reference_day - record.day),
                reliability=record.reliability,
                source_id=record.source_id,
            )
        )
    for parent in evaluation.iter_nodes():
        _assign_uniqueness(parent)
    evaluation.reference_day = reference_day
    return evaluation


def _assign_uniqueness(parent: Node) -> None:
    counts: dict[str, int] = {}
    for child in parent.children:
        for qual in child.attached:
            counts[qual.source_id] = counts.get(qual.source_id, 0) + 1
    for child in parent.children:
        if child.attached:
            child.attached[:] = [
                replace(q, uniqueness=1.0 / counts[q.source_id]) for q in child.attached
            ]


def node_value(node: Node, spec: WeightingSpec) -> NodeResult | None:
    """Aggregate one node from its current contributions; None when empty."""
    result, _ = _aggregate(node, spec)
    return result


def _aggregate(node: Node, spec: WeightingSpec):
    values: list[float] = []
    alphas: list[float] = []
    rels: list[float] = []
    weights: list[float] = []

    def add(value: float, alpha: float, rel: float, weight: float) -> None:
        values.append(value)
        alphas.append(alpha)
        rels.append(rel)
        weights.append(weight)

    if not node.consumed:
        for m in node.attached:
            add(m.value, m.alpha, m.reliability, m.alpha * m.reliability)
    for child in node.children:
        if child.calculated is not None:
            res = child.calculated
            add(res.x, res.alpha, res.reliability, res.alpha * res.reliability)
        elif not child.consumed:
            for s in child.attached:
                add(s.value, s.alpha, s.reliability, s.alpha * s.reliability * s.uniqueness)

    if not values:
        return None, None
    try:
        normed = normalize_weights(weights)
    except ValueError:
        label = "root" if node.is_root else node.code.text
        raise EvaluationError(
            f"all contribution weights at node {label} are zero (reliability and/or "
            "time weights vanish); the node cannot be aggregated"
        ) from None
    x = apply_curve(spec, math.fsum(w * v for w, v in zip(normed, values)))
    # convex combinations of values in [0, 1]; clip float dust at the ends
    alpha_q = min(max(math.fsum(w * a for w, a in zip(normed, alphas)), 0.0), 1.0)
    r_q = min(max(math.fsum(w * r for w, r in zip(normed, rels)), 0.0), 1.0)
    return NodeResult(x=x, alpha=alpha_q, reliability=r_q), tuple(normed)


def _virtual_component_result(node: Node, spec: WeightingSpec) -> NodeResult | None:
    """Profile entry for a leaf component (data attached on the bare letter):
    such a node never calculates during the roll-up, so aggregate its own
    qualifiers out-of-band purely for reporting."""
    if node.calculated is not None:
        return node.calculated
    if not node.attached:
        return None
    probe = Node(node.code)
    probe.attached = node.attached
    result, _ = _aggregate(probe, spec)
    return result


def evaluate_report(
    tree: IcfTree,
    spec: WeightingSpec,
    *,
    min_raw: float = RAW_MIN,
    max_raw: float = RAW_MAX,
    audit: bool = False,
) -> EvaluationReport:
    """Run the full roll-up and report index, root alpha/r and the profile.

    The tree is reset to its pre-evaluation state afterwards: calculated
    values are dropped and all qualifiers count as unconsumed again.
    """
    reference_day = tree.reference_day if tree.reference_day is not None else 0
    audits: list[NodeAudit] = [] if audit else None
    try:
        for level in range(tree.deepest_level, -1, -1):
            for node in tree.nodes_at_level(level):
                if node.is_leaf:
                    continue
                _compute_in_place(node, spec, audits)
        _compute_in_place(tree.root, spec, audits)

        if tree.root.calculated is None:
            raise EvaluationError("cannot evaluate a tree without any attached qualifiers")
        root = tree.root.calculated
        scores = {}
        for child in tree.root.children:
            res = _virtual_component_result(child, spec)
            if res is None:
                continue
            comp = child.code.component
            scores[comp] = ComponentScore(comp, scale_index(res.x, min_raw, max_raw), res.x)
        return EvaluationReport(
            index=HealthIndex(
                value=scale_index(root.x, min_raw, max_raw),
                raw=root.x,
                evaluated_at=reference_day,
            ),
            alpha=root.alpha,
            reliability=root.reliability,
            profile=HealthProfile(scores),
            audits=tuple(audits) if audit else None,
        )
    finally:
        for node in tree.iter_nodes():
            node.calculated = None
            node.consumed = False


def _compute_in_place(node: Node, spec: WeightingSpec, audits: "list[NodeAudit] | None") -> None:
    result, normed = _aggregate(node, spec)
    if result is None:
        return
    node.calculated = result
    node.consumed = True
    for child in node.children:
        child.consumed = True
    if audits is not None:
        audits.append(
            NodeAudit(
                code="" if node.is_root else node.code.text,
                normalized_weights=normed,
                result=result,
            )
        )


def evaluate(
    tree: IcfTree,
    spec: WeightingSpec,
    *,
    min_raw: float = RAW_MIN,
    max_raw: float = RAW_MAX,
) -> HealthIndex:
    """Roll the attached tree up to the root and scale to the 0-100 index."""
    return evaluate_report(tree, spec, min_raw=min_raw, max_raw=max_raw).index


def evaluate_profile(
    tree: IcfTree,
    spec: WeightingSpec,
    *,
    min_raw: float = RAW_MIN,
    max_raw: float = RAW_MAX,
) -> HealthProfile:
    """Per-component scaled scores from the same roll-up as ``evaluate``."""
    return evaluate_report(tree, spec, min_raw=min_raw, max_raw=max_raw).profile


def evaluate_trajectory(
    records: Sequence[QualifierRecord],
    days: Sequence[int],
    spec: WeightingSpec,
    *,
    tree: IcfTree | None = None,
    min_raw: float = RAW_MIN,
    max_raw: float = RAW_MAX,
) -> list[tuple[int, HealthIndex]]:
    """Evaluate the index on each requested day, using only the records
    available by that day and the day itself as the decay reference.

    A skeleton built from all record codes is reused across days unless an
    explicit (for example cohort-wide) tree is supplied.
    """
    if list(days) != sorted(days):
        raise EvaluationError("trajectory days must be sorted ascending")
    skeleton = tree if tree is not None else build_tree({r.code for r in records})
    out: list[tuple[int, HealthIndex]] = []
    for day in days:
        visible = [r for r in records if r.day <= day]
        attached = attach(skeleton, visible, day, spec)
        out.append((day, evaluate(attached, spec, min_raw=min_raw, max_raw=max_raw)))
    return out
