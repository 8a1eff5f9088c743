"""Transfer of pairwise preference labels through a solved coupling.

For a target pair (j, j'), the outer product of coupling columns j and j'
weights every source pair's label by how strongly the two source segments
correspond to the two target segments. Summing those weighted labels gives a
raw transferred label; a batch of raw labels is min-max normalized and then
binarized. Pairs whose matching matrix carries no mass get no label
(abstention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError
from .ot_align import GwConfig, GwReport, TransportPlan, entropic_gw
from .trajectory import TrajectorySet, pairwise_distance

ABSTAIN_THRESHOLD = 1e-12

# A raw-label batch whose spread is below this carries no preference signal:
# coupling jitter alone produces spreads around 1e-9 even when every source
# label is identical, and min-max normalization would blow that noise up to
# full range. Real signal sits at the matching-mass scale (~1/M^2), orders of
# magnitude above.
DEGENERATE_SPREAD = 1e-6


@dataclass
class PreferenceRecord:
    """An unordered segment pair with a preference label.

    label semantics: 0 means `first` is preferred, 1 means `second` is
    preferred, 0.5 means equally preferable. raw_label/normalized_label are
    filled in on transferred records.
    """

    first: int
    second: int
    label: float
    raw_label: float | None = None
    normalized_label: float | None = None

    def __post_init__(self) -> None:
        if self.first == self.second:
            raise ValueError("a preference pair needs two distinct segments")
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label must lie in [0, 1], got {self.label}")


@dataclass
class PreferenceDataset:
    """Preference records over one trajectory set."""

    records: list[PreferenceRecord]
    over: TrajectorySet

    def __post_init__(self) -> None:
        n = len(self.over)
        seen: set[frozenset[int]] = set()
        for rec in self.records:
            if not (0 <= rec.first < n and 0 <= rec.second < n):
                raise ValueError(
                    f"record ({rec.first}, {rec.second}) references a segment "
                    f"outside the {n}-segment set"
                )
            key = frozenset((rec.first, rec.second))
            if key in seen:
                raise ValueError(f"duplicate unordered pair ({rec.first}, {rec.second})")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def ordered_label_lookup(self) -> dict[tuple[int, int], float]:
        """Labels for both orientations: z(b, a) = 1 - z(a, b)."""
        table: dict[tuple[int, int], float] = {}
        for rec in self.records:
            table[(rec.first, rec.second)] = rec.label
            table[(rec.second, rec.first)] = 1.0 - rec.label
        return table


@dataclass
class PairMatchMatrix:
    """Outer product of two coupling columns: source-pair matching mass."""

    values: np.ndarray
    target_pair: tuple[int, int]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        m = self.values.shape[0]
        if self.values.shape != (m, m):
            raise ValueError("pair-match matrix must be square")


def pair_match(plan: TransportPlan, j: int, j_prime: int) -> PairMatchMatrix:
    """Matching-mass matrix for target pair (j, j'): column_j x column_j'^T."""
    n = plan.shape[1]
    if j == j_prime:
        raise ValueError("target pair needs two distinct segments")
    if not (0 <= j < n and 0 <= j_prime < n):
        raise ValueError(f"target indices ({j}, {j_prime}) out of range for {n} columns")
    values = np.outer(plan.values[:, j], plan.values[:, j_prime])
    return PairMatchMatrix(values=values, target_pair=(j, j_prime))


def transfer_label(
    match: PairMatchMatrix,
    source: PreferenceDataset,
    abstain_threshold: float = ABSTAIN_THRESHOLD,
) -> float | None:
    """Label mass transferred onto one target pair; None means abstain.

    Sums match[i, i'] * z(i, i') over all ordered source pairs with i != i'
    (a segment is never preferred over itself). Returns None when no entry of
    the matching matrix reaches abstain_threshold. A missing source label is
    an error only when its entry carries mass at or above the threshold.
    """
    values = match.values
    if float(values.max()) < abstain_threshold:
        return None
    lookup = source.ordered_label_lookup()
    m = values.shape[0]
    total = 0.0
    for i in range(m):
        for i_prime in range(m):
            if i == i_prime:
                continue
            mass = values[i, i_prime]
            label = lookup.get((i, i_prime))
            if label is None:
                if mass >= abstain_threshold:
                    raise CoverageError(
                        f"no source label for pair ({i}, {i_prime}) carrying mass {mass:.3e}"
                    )
                continue
            total += mass * label
    return total


def normalize_labels(
    raw: list[tuple[tuple[int, int], float | None]],
    degenerate_spread: float = DEGENERATE_SPREAD,
) -> list[tuple[tuple[int, int], float | None]]:
    """Min-max normalize a batch of raw labels into [0, 1].

    Abstained entries (None) pass through unchanged and do not influence the
    range. A degenerate batch (max - min below `degenerate_spread`) normalizes
    to 0.5 everywhere: no preference signal exists, and stretching coupling
    jitter to full range would invent one.
    """
    if not raw:
        raise ValueError("normalize_labels needs at least one entry")
    present = [value for _, value in raw if value is not None]
    if not present:
        raise ValueError("normalize_labels needs at least one non-abstained label")
    lo, hi = min(present), max(present)
    degenerate = (hi - lo) <= degenerate_spread
    out: list[tuple[tuple[int, int], float | None]] = []
    for pair, value in raw:
        if value is None:
            out.append((pair, None))
        elif degenerate:
            out.append((pair, 0.5))
        else:
            out.append((pair, (value - lo) / (hi - lo)))
    return out


def binarize(z: float) -> int:
    """1 when z > 0.5, else 0 (ties count as no preference for the second)."""
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"normalized label must lie in [0, 1], got {z}")
    return 1 if z > 0.5 else 0


@dataclass
class CpaTransferResult:
    """Transferred labels plus what the pipeline needs around them."""

    dataset: PreferenceDataset
    abstained_pairs: list[tuple[int, int]] = field(default_factory=list)
    gw_report: GwReport | None = None

    @property
    def transferred_count(self) -> int:
        return len(self.dataset.records)

    @property
    def abstained_count(self) -> int:
        return len(self.abstained_pairs)


def compute_cpa_labels(
    source_set: TrajectorySet,
    source_prefs: PreferenceDataset,
    target_set: TrajectorySet,
    metric: str = "euclidean",
    gw_config: GwConfig | None = None,
    abstain_threshold: float = ABSTAIN_THRESHOLD,
) -> CpaTransferResult:
    """Align two trajectory sets and transfer source preferences to the target.

    Pipeline: pairwise distances on both sets, entropic alignment, raw label
    transfer for every target pair j < j', min-max normalization over the
    batch, binarization. Abstained pairs are listed separately and excluded
    from the returned dataset.
    """
    c_s = pairwise_distance(source_set, metric)
    c_t = pairwise_distance(target_set, metric)
    report = entropic_gw(
        c_s, c_t, source_set.weights, target_set.weights, gw_config
    )
    n = len(target_set)
    raw: list[tuple[tuple[int, int], float | None]] = []
    for j in range(n):
        for j_prime in range(j + 1, n):
            match = pair_match(report.plan, j, j_prime)
            raw.append(
                ((j, j_prime), transfer_label(match, source_prefs, abstain_threshold))
            )
    records: list[PreferenceRecord] = []
    abstained: list[tuple[int, int]] = []
    if raw and any(value is not None for _, value in raw):
        for (pair, normalized), (_, raw_value) in zip(normalize_labels(raw), raw):
            if normalized is None:
                abstained.append(pair)
            else:
                records.append(
                    PreferenceRecord(
                        first=pair[0],
                        second=pair[1],
                        label=float(binarize(normalized)),
                        raw_label=raw_value,
                        normalized_label=normalized,
                    )
                )
    else:
        abstained = [pair for pair, _ in raw]
    dataset = PreferenceDataset(records=records, over=target_set)
    return CpaTransferResult(dataset=dataset, abstained_pairs=abstained, gw_report=report)


def cpa_accuracy(
    predicted: PreferenceDataset,
    truth: PreferenceDataset,
    exclude_ties: bool = True,
) -> float:
    """Percentage of shared pairs whose binary labels agree.

    Pairs are matched unordered; a truth record stored in the opposite
    orientation contributes its complemented label. Pairs with tied ground
    truth (0.5) are excluded when exclude_ties is set — whether they should
    count is a convention, so it is a knob, not a constant.
    """
    truth_lookup = truth.ordered_label_lookup()
    shared = 0
    correct = 0
    for rec in predicted.records:
        true_label = truth_lookup.get((rec.first, rec.second))
        if true_label is None:
            continue
        if exclude_ties and true_label == 0.5:
            continue
        shared += 1
        if binarize(rec.label) == binarize(true_label):
            correct += 1
    if shared == 0:
        raise ValueError("no shared pairs between predicted and truth datasets")
    return 100.0 * correct / shared
