"""Experiment harness: the training loop, evaluation, sweeps, and run outputs.

``run_train`` executes one experiment from a TrainConfig. In allnc mode each
step takes two augmented views of a batch through the shared network and
minimizes

    branch1 + branch2 + alpha * (hycon + p2p over feature class means)

where each branch is eta*CE + (1-eta)*(reweighted CE + p2p over classifier
rows) on its own view, and eta = 1 - (t/t_max)^gamma decays over epochs
(frozen to a constant when the schedule is disabled). In ce mode a step is a
plain cross-entropy update on the raw batch; the other loss columns log zero.

After every epoch the full training set is pushed through the encoder in
evaluation form (no augmentation) for a collapse report, and a balanced test
split is scored overall and per class-size group. Groups follow the head
count n_max: Many > 0.2*n_max, Few <= 0.04*n_max, Medium between.

A non-finite loss or gradient ends the run early with the completed epochs
preserved and the result marked diverged. Sweeps run one value per row and
keep going past failures, marking the row instead of raising.

Run artifacts (fixed layout, deterministic bytes for a fixed config):
    config.resolved   the full effective config, reparseable
    epochs.csv        one row per epoch: losses, diagnostics, accuracies
    report.json       final collapse report
    features.csv      final training features + labels (full precision)
    weights.csv       classifier rows + bias column (full precision)
    icpa_mu.csv       final pairwise angles between centered class means
    icpa_w.csv        final pairwise angles between centered classifier rows
    params/           parameter snapshot (manifest.json + one .npy per array)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses as L
from .config import TrainConfig, resolved_text, with_overrides
from .data import (
    Dataset,
    LongTailSpec,
    SyntheticSpec,
    ViewAugmenter,
    balanced_counts,
    batches,
    gen_gaussian_mixture,
    load_csv,
    long_tail_counts,
)
from .errors import CollapseLabError, ConfigError, ContractError
from .model import (
    ArchSpec,
    NetworkParams,
    SgdConfig,
    SgdState,
    forward,
    init_params,
    save_params,
    sgd_step,
)
from .ncmetrics import NCReport, nc_report

EPOCH_CSV_HEADER = (
    "epoch,eta,loss_ce,loss_re,loss_hycon,loss_p2p_mu,loss_p2p_w,"
    "loss_branch1,loss_branch2,loss_total,nc1,std_cos_mu,std_cos_w,delta,"
    "ncc_agreement,acc_overall,acc_many,acc_medium,acc_few"
)

MANY_FRACTION = 0.2
FEW_FRACTION = 0.04


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


@dataclass
class GroupAccuracy:
    """Balanced-test accuracy overall and by training-frequency group.

    A group with no classes (balanced training puts everything in Many)
    scores NaN.
    """

    overall: float
    many: float
    medium: float
    few: float


@dataclass
class EpochLog:
    epoch: int
    eta: float
    loss_ce: float
    loss_re: float
    loss_hycon: float
    loss_p2p_mu: float
    loss_p2p_w: float
    loss_branch1: float
    loss_branch2: float
    loss_total: float
    report: NCReport
    accuracy: GroupAccuracy

    def csv_row(self) -> str:
        cells = [
            str(self.epoch),
            _fmt(self.eta),
            _fmt(self.loss_ce),
            _fmt(self.loss_re),
            _fmt(self.loss_hycon),
            _fmt(self.loss_p2p_mu),
            _fmt(self.loss_p2p_w),
            _fmt(self.loss_branch1),
            _fmt(self.loss_branch2),
            _fmt(self.loss_total),
            _fmt(self.report.nc1),
            _fmt(self.report.std_cos_mu),
            _fmt(self.report.std_cos_w),
            _fmt(self.report.delta),
            _fmt(self.report.ncc_agreement),
            _fmt(self.accuracy.overall),
            _fmt(self.accuracy.many),
            _fmt(self.accuracy.medium),
            _fmt(self.accuracy.few),
        ]
        return ",".join(cells)


@dataclass
class RunResult:
    config: TrainConfig
    params: NetworkParams
    train: Dataset
    test: Dataset
    train_counts: np.ndarray
    logs: list[EpochLog]
    diverged: bool

    @property
    def final_report(self) -> NCReport:
        if not self.logs:
            raise ContractError("RunResult: no completed epochs")
        return self.logs[-1].report

    @property
    def final_accuracy(self) -> GroupAccuracy:
        if not self.logs:
            raise ContractError("RunResult: no completed epochs")
        return self.logs[-1].accuracy


def class_groups(train_counts: np.ndarray) -> np.ndarray:
    """0 = Many, 1 = Medium, 2 = Few per class, by share of the head count."""
    counts = np.asarray(train_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ContractError("class_groups: need a non-empty 1-d count vector")
    n_max = counts.max()
    groups = np.full(counts.shape, 1, dtype=np.int64)
    groups[counts > MANY_FRACTION * n_max] = 0
    groups[counts <= FEW_FRACTION * n_max] = 2
    return groups


def _derive_seeds(seed: int) -> dict[str, int]:
    root = np.random.SeedSequence(int(seed))
    names = ("train_data", "test_data", "init", "augment")
    children = root.spawn(len(names))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


def build_datasets(cfg: TrainConfig) -> tuple[Dataset, Dataset, np.ndarray]:
    """Training split, balanced test split, and per-class training counts."""
    if cfg.dataset == "csv":
        train = load_csv(cfg.train_csv)
        test = load_csv(cfg.test_csv)
        if train.dim != cfg.input_dim or test.dim != cfg.input_dim:
            raise ConfigError(
                f"csv feature width {train.dim}/{test.dim} does not match input_dim {cfg.input_dim}"
            )
        counts = train.counts(cfg.num_classes)
        if np.any(counts < 1):
            raise ConfigError("csv training data is missing at least one class")
        return train, test, counts
    seeds = _derive_seeds(cfg.seed)
    spec = SyntheticSpec(
        num_classes=cfg.num_classes,
        input_dim=cfg.input_dim,
        mean_placement=cfg.mean_placement,
        mean_radius=cfg.mean_radius,
        noise_std=cfg.noise_std,
        placement_seed=cfg.placement_seed,
    )
    counts = long_tail_counts(LongTailSpec(cfg.num_classes, cfg.n_max, cfg.beta))
    train = gen_gaussian_mixture(spec, counts, seeds["train_data"])
    # Evaluation is always balanced, whatever beta shaped the training split.
    test = gen_gaussian_mixture(
        spec, balanced_counts(cfg.num_classes, cfg.n_test_per_class), seeds["test_data"]
    )
    return train, test, counts


def _arch_from_config(cfg: TrainConfig) -> ArchSpec:
    return ArchSpec(
        input_dim=cfg.input_dim,
        num_classes=cfg.num_classes,
        hidden_dims=cfg.hidden_dims,
        feature_dim=cfg.feature_dim,
        proj_dim=cfg.proj_dim,
        proj1_hidden=cfg.proj1_hidden,
        predictor_hidden=cfg.predictor_hidden,
    )


def evaluate(
    params: NetworkParams, test: Dataset, train_counts: np.ndarray
) -> tuple[GroupAccuracy, NCReport]:
    """Score a balanced split: overall and per-group accuracy plus a report."""
    out = forward(params, test.x)
    logits = out.logits.data
    predicted = np.argmax(logits, axis=1)
    correct = predicted == test.y
    groups = class_groups(train_counts)
    per_group = []
    for g in (0, 1, 2):
        members = np.isin(test.y, np.flatnonzero(groups == g))
        per_group.append(float(np.mean(correct[members])) if members.any() else float("nan"))
    acc = GroupAccuracy(
        overall=float(np.mean(correct)), many=per_group[0], medium=per_group[1], few=per_group[2]
    )
    report = nc_report(
        out.features.data, test.y, params.classifier_w.data, params.classifier_b.data, len(train_counts)
    )
    return acc, report


@dataclass
class _StepStats:
    """Per-batch loss components, as plain floats for the epoch means."""

    ce: float = 0.0
    re: float = 0.0
    hycon: float = 0.0
    p2p_mu: float = 0.0
    p2p_w: float = 0.0
    branch1: float = 0.0
    branch2: float = 0.0
    total: float = 0.0


def _allnc_step(
    cfg: TrainConfig,
    params: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    eta_value: float,
    class_weights: np.ndarray,
    augmenter: ViewAugmenter,
) -> tuple[ad.Node, _StepStats]:
    x1, x2 = augmenter.pair(x)
    view1 = forward(params, x1)
    view2 = forward(params, x2)

    ce1 = L.mean_cross_entropy(view1.logits, y)
    ce2 = L.mean_cross_entropy(view2.logits, y)
    re1 = L.mean_reweighted_ce(view1.logits, y, class_weights)
    re2 = L.mean_reweighted_ce(view2.logits, y, class_weights)

    zero = ad.constant(0.0)
    if cfg.disable_p2p_w:
        p2p_w = zero
    else:
        p2p_w = L.p2p(params.classifier_w, center_and_normalize=False)

    # One p2p_w node feeds both branches; gradient accumulation doubles it,
    # matching two independent copies.
    branch1 = ad.add(ad.scale(ce1, eta_value), ad.scale(ad.add(re1, p2p_w), 1.0 - eta_value))
    branch2 = ad.add(ad.scale(ce2, eta_value), ad.scale(ad.add(re2, p2p_w), 1.0 - eta_value))

    if cfg.disable_hycon:
        hycon_term = zero
    else:
        hycon_term = L.hycon_batch(view1.h, view2.h, view1.z, view2.z, y)

    if cfg.disable_p2p_mu:
        p2p_mu_term = zero
    else:
        # Class means centered by the batch's global feature mean, the same
        # center the diagnostics subtract; an unweighted mean of class means
        # drifts off it in imbalanced batches.
        mu1, present1 = L.class_mean_matrix(view1.features, y)
        mu2, present2 = L.class_mean_matrix(view2.features, y)
        terms = []
        if present1.shape[0] >= 2:
            terms.append(
                L.p2p(mu1, True, num_classes=cfg.num_classes, center=ad.mean_rows(view1.features))
            )
        if present2.shape[0] >= 2:
            terms.append(
                L.p2p(mu2, True, num_classes=cfg.num_classes, center=ad.mean_rows(view2.features))
            )
        if terms:
            summed = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
            p2p_mu_term = ad.scale(summed, 1.0 / len(terms))
        else:
            p2p_mu_term = zero

    total = L.total_loss(branch1, branch2, hycon_term, p2p_mu_term, cfg.alpha)
    stats = _StepStats(
        ce=0.5 * (ce1.item() + ce2.item()),
        re=0.5 * (re1.item() + re2.item()),
        hycon=hycon_term.item(),
        p2p_mu=p2p_mu_term.item(),
        p2p_w=p2p_w.item(),
        branch1=branch1.item(),
        branch2=branch2.item(),
        total=total.item(),
    )
    return total, stats


def _ce_step(params: NetworkParams, x: np.ndarray, y: np.ndarray) -> tuple[ad.Node, _StepStats]:
    out = forward(params, x)
    ce = L.mean_cross_entropy(out.logits, y)
    value = ce.item()
    return ce, _StepStats(ce=value, branch1=value, total=value)


def run_train(cfg: TrainConfig, emit: bool | None = None) -> RunResult:
    """Execute one experiment; optionally emit artifacts to cfg.out_dir.

    ``emit`` defaults to whether cfg.out_dir is set. Returns the result with
    one EpochLog per completed epoch; a non-finite loss or gradient stops
    training early and marks the result diverged instead of raising.
    """
    train, test, counts = build_datasets(cfg)
    seeds = _derive_seeds(cfg.seed)
    params = init_params(_arch_from_config(cfg), seeds["init"])
    opt_state = SgdState()
    opt_cfg = SgdConfig(lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    trainable = params.trainable(cfg.freeze_classifier_bias)
    class_weights = L.inverse_frequency_weights(counts)
    augmenter = ViewAugmenter(
        noise_std=cfg.view_noise_std,
        mask_prob=cfg.view_mask_prob,
        rng=np.random.default_rng(np.random.SeedSequence([seeds["augment"]])),
    )

    logs: list[EpochLog] = []
    diverged = False
    for epoch in range(1, cfg.t_max + 1):
        if cfg.disable_gbbn:
            eta_value = cfg.fixed_eta
        else:
            eta_value = L.eta(epoch, cfg.t_max, cfg.gamma)
        sums = _StepStats()
        n_batches = 0
        for x, y in batches(train, cfg.batch_size, cfg.seed, epoch):
            try:
                if cfg.mode == "ce":
                    total, stats = _ce_step(params, x, y)
                else:
                    total, stats = _allnc_step(cfg, params, x, y, eta_value, class_weights, augmenter)
                if not np.isfinite(stats.total):
                    diverged = True
                    break
                grads = ad.backward(total)
                sgd_step(trainable, grads, opt_state, opt_cfg)
            except CollapseLabError:
                diverged = True
                break
            for name in vars(stats):
                setattr(sums, name, getattr(sums, name) + getattr(stats, name))
            n_batches += 1
        if diverged:
            break

        feats = forward(params, train.x).features.data
        report = nc_report(feats, train.y, params.classifier_w.data, params.classifier_b.data, cfg.num_classes)
        accuracy, _ = evaluate(params, test, counts)
        logs.append(
            EpochLog(
                epoch=epoch,
                eta=eta_value,
                loss_ce=sums.ce / n_batches,
                loss_re=sums.re / n_batches,
                loss_hycon=sums.hycon / n_batches,
                loss_p2p_mu=sums.p2p_mu / n_batches,
                loss_p2p_w=sums.p2p_w / n_batches,
                loss_branch1=sums.branch1 / n_batches,
                loss_branch2=sums.branch2 / n_batches,
                loss_total=sums.total / n_batches,
                report=report,
                accuracy=accuracy,
            )
        )

    result = RunResult(
        config=cfg,
        params=params,
        train=train,
        test=test,
        train_counts=counts,
        logs=logs,
        diverged=diverged,
    )
    if emit is None:
        emit = bool(cfg.out_dir)
    if emit:
        if not cfg.out_dir:
            raise ConfigError("run_train: emission requested but out_dir is empty")
        emit_outputs(result, cfg.out_dir)
    return result


# ---------------------------------------------------------------------------
# output emission


def _write_matrix_csv(path: Path, matrix: np.ndarray, prefix: str) -> None:
    header = ",".join(f"{prefix}{i}" for i in range(matrix.shape[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in matrix:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_features_csv(path: Path, features: np.ndarray, labels: np.ndarray) -> None:
    """Feature rows plus a label column, full precision for exact round trips."""
    header = ",".join([f"f{i}" for i in range(features.shape[1])] + ["label"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, label in zip(features, labels):
            fh.write(",".join(f"{v:.17g}" for v in row) + f",{int(label)}\n")


def write_weights_csv(path: Path, weights: np.ndarray, bias: np.ndarray | None) -> None:
    """Classifier rows, one class per row, bias as a trailing column if given."""
    cols = [f"w{i}" for i in range(weights.shape[1])]
    if bias is not None:
        cols.append("bias")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for c, row in enumerate(weights):
            cells = [f"{v:.17g}" for v in row]
            if bias is not None:
                cells.append(f"{bias[c]:.17g}")
            fh.write(",".join(cells) + "\n")


def emit_outputs(result: RunResult, out_dir: str | Path) -> Path:
    """Write the full artifact set for one run; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    (out / "config.resolved").write_text(resolved_text(result.config), encoding="utf-8")

    with open(out / "epochs.csv", "w", encoding="utf-8") as fh:
        fh.write(EPOCH_CSV_HEADER + "\n")
        for log in result.logs:
            fh.write(log.csv_row() + "\n")

    report = result.final_report
    payload = report.to_dict()
    payload["diverged"] = result.diverged
    payload["epochs_completed"] = len(result.logs)
    payload["final_accuracy"] = {
        "overall": result.final_accuracy.overall,
        "many": result.final_accuracy.many,
        "medium": result.final_accuracy.medium,
        "few": result.final_accuracy.few,
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n", encoding="utf-8")

    feats = forward(result.params, result.train.x).features.data
    write_features_csv(out / "features.csv", feats, result.train.y)
    write_weights_csv(
        out / "weights.csv", result.params.classifier_w.data, result.params.classifier_b.data
    )
    _write_matrix_csv(out / "icpa_mu.csv", report.icpa_mu, "c")
    _write_matrix_csv(out / "icpa_w.csv", report.icpa_w, "c")
    save_params(result.params, out / "params")
    return out


# ---------------------------------------------------------------------------
# sweeps

SWEEP_CSV_HEADER = "param,value,status,acc_many,acc_medium,acc_few,acc_overall"
_SWEEPABLE = ("gamma", "alpha", "beta")


@dataclass
class SweepRow:
    param: str
    value: float
    status: str  # "ok" or "failed"
    accuracy: GroupAccuracy | None

    def csv_row(self) -> str:
        if self.accuracy is None:
            accs = ["nan"] * 4
        else:
            accs = [
                _fmt(self.accuracy.many),
                _fmt(self.accuracy.medium),
                _fmt(self.accuracy.few),
                _fmt(self.accuracy.overall),
            ]
        return ",".join([self.param, _fmt(self.value), self.status, *accs])


def sweep(cfg: TrainConfig, param: str, values: list[float]) -> list[SweepRow]:
    """Run one training per value of gamma, alpha, or beta; shared seeds.

    A failed run (divergence or any package error) produces a row marked
    failed and the sweep continues.
    """
    if param not in _SWEEPABLE:
        raise ConfigError(f"sweep: param must be one of {_SWEEPABLE}, got {param!r}")
    if not values:
        raise ConfigError("sweep: need at least one value")
    rows: list[SweepRow] = []
    for value in values:
        try:
            one = with_overrides(cfg, **{param: float(value)}, out_dir="")
            result = run_train(one, emit=False)
            if result.diverged or not result.logs:
                rows.append(SweepRow(param, float(value), "failed", None))
            else:
                rows.append(SweepRow(param, float(value), "ok", result.final_accuracy))
        except CollapseLabError:
            rows.append(SweepRow(param, float(value), "failed", None))
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_row() + "\n")
