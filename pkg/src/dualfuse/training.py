"""Joint objective assembly, the training loop, and evaluation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .metrics import classification_metrics, macro_auroc, pearson, spearman
from .model import DualFuseModel
from .numerics import Adam, Tensor, cross_entropy, no_grad, tlog
from .reconstruction import recover_loss

LOSS_CLAMP = 1e-6


class TrainingDiverged(RuntimeError):
    def __init__(self, batch_index, component):
        self.batch_index = batch_index
        self.component = component
        super().__init__(
            f"non-finite loss in component {component!r} at batch {batch_index}"
        )


@dataclass
class LossBreakdown:
    cls: float
    modal: list
    cali: float
    recover: float
    dyn: float
    total: float

    @classmethod
    def compose(cls_, cls_loss, modal, cali, recover, lambda_a, lambda_c):
        dyn = cls_loss + lambda_a * sum(modal) + lambda_c * cali
        return cls_(
            cls=cls_loss,
            modal=list(modal),
            cali=cali,
            recover=recover,
            dyn=dyn,
            total=dyn + recover,
        )


@dataclass
class UncertaintyReport:
    """Per-sample, per-modality uncertainty panel from one evaluation."""

    labels: np.ndarray
    predictions: np.ndarray
    r: np.ndarray             # (N, M)
    s: np.ndarray             # (N, M)
    w: np.ndarray             # (N, M) fusion weights (the P_D rows)
    unimodal_loss: np.ndarray  # (N, M)
    p_l: np.ndarray           # (N, M) normalized unimodal-loss rows
    noise_levels: np.ndarray  # (N, M)
    present: np.ndarray       # (N, M)
    fluct_flags: np.ndarray   # (N,)


def unimodal_loss(z, labels, head):
    """Per-sample cross-entropy of one modality's linear classifier."""
    return cross_entropy(head(z), labels)


def fused_loss(logits, labels):
    return cross_entropy(logits, labels).mean()


def calibration_loss(p_d, p_l, true_js=False, clamp=LOSS_CLAMP):
    """Symmetric KL (or optional true Jensen-Shannon) between the weight
    distribution and the normalized unimodal-loss distribution, batch mean."""
    if not (np.isfinite(p_d.data).all() and np.isfinite(p_l.data).all()):
        raise ValueError("calibration inputs must be finite")
    pd = p_d + clamp
    pl = p_l + clamp
    if true_js:
        mid = (pd + pl) * 0.5
        js = 0.5 * (pd * (tlog(pd) - tlog(mid))).sum(axis=-1) + 0.5 * (
            pl * (tlog(pl) - tlog(mid))
        ).sum(axis=-1)
        return js.mean()
    kl_dl = (pd * (tlog(pd) - tlog(pl))).sum(axis=-1)
    kl_ld = (pl * (tlog(pl) - tlog(pd))).sum(axis=-1)
    return (0.5 * (kl_dl + kl_ld)).mean()


def normalized_loss_distribution(per_modal_losses, clamp=LOSS_CLAMP):
    """Per-sample accuracy distribution over modalities (detached target).

    Rows are softmax(-loss): a modality that classifies the sample well
    gets a large share, so pulling the weight distribution toward this
    target prioritizes reliable modalities.
    """
    cols = [t.data.reshape(-1, 1) for t in per_modal_losses]
    raw = np.concatenate(cols, axis=1)
    acc = np.exp(-(raw - raw.min(axis=1, keepdims=True)))
    acc = np.maximum(acc, clamp)
    return acc / acc.sum(axis=1, keepdims=True)


@dataclass
class BatchResult:
    breakdown: LossBreakdown
    predictions: np.ndarray
    total: Tensor


def batch_objective(model, window_arrays, present, labels, hist_features,
                    sim_mask=None, calibration_target=None,
                    frozen_recover_targets=None):
    """Assemble the full training objective for one batch.

    Returns the scalar loss tensor plus the logged breakdown; components
    are batch means so the breakdown recomposes exactly. The calibration
    target and reconstruction targets are constants per step; they can be
    pinned explicitly so derivative checks see the same function backward
    differentiates.
    """
    cfg = model.cfg
    out = model.forward(window_arrays, present, hist_features, sim_mask=sim_mask,
                        frozen_recover_targets=frozen_recover_targets)
    b = len(labels)

    l_cls = fused_loss(out.logits, labels)
    modal_vecs = [cross_entropy(ul, labels) for ul in out.unimodal_logits]
    modal_means = [v.mean() for v in modal_vecs]

    if cfg.ablate.calibration_off:
        l_cali = Tensor(0.0)
    else:
        if calibration_target is None:
            calibration_target = normalized_loss_distribution(modal_vecs)
        l_cali = calibration_loss(out.w, Tensor(calibration_target),
                                  true_js=cfg.ablate.true_js)

    if out.recover_terms:
        rec = None
        for z_hat, z_tgt in out.recover_terms:
            term = recover_loss(z_hat, z_tgt)
            rec = term if rec is None else rec + term
        l_recover = rec * (1.0 / b)
    else:
        l_recover = Tensor(0.0)

    lam_a, lam_c = cfg.loss.lambda_a, cfg.loss.lambda_c
    modal_sum = None
    for mm in modal_means:
        modal_sum = mm if modal_sum is None else modal_sum + mm
    total = l_cls + lam_a * modal_sum + lam_c * l_cali + l_recover

    breakdown = LossBreakdown.compose(
        float(l_cls.data),
        [float(mm.data) for mm in modal_means],
        float(l_cali.data),
        float(l_recover.data),
        lam_a,
        lam_c,
    )
    preds = out.logits.data.argmax(axis=1)
    return BatchResult(breakdown=breakdown, predictions=preds, total=total), out


def _check_finite(breakdown, batch_index):
    for name, val in [
        ("cls", breakdown.cls),
        ("cali", breakdown.cali),
        ("recover", breakdown.recover),
        ("total", breakdown.total),
    ] + [(f"modal_{i + 1}", v) for i, v in enumerate(breakdown.modal)]:
        if not np.isfinite(val):
            raise TrainingDiverged(batch_index, name)


def build_feature_cache(model, corpus, ids=None):
    """Final (reconstruction-aware) features per corpus row, without grad.

    Returns (N, M, D) with rows for `ids` (default all) filled in.
    """
    n = corpus.n
    ids = np.arange(n) if ids is None else np.asarray(ids)
    cache = np.zeros((n, model.n_modalities, model.dim))
    with no_grad():
        for start in range(0, len(ids), 512):
            chunk = ids[start : start + 512]
            arrays = [w[chunk] for w in corpus.windows]
            z_raw = model.encode_windows(arrays)
            z_final, _ = model.final_features(z_raw, corpus.present[chunk])
            for mi in range(model.n_modalities):
                cache[chunk, mi] = z_final[mi].data
    return cache


def gather_histories(corpus, cache, idx):
    """Per modality (B, T, D) history features for the given sample ids."""
    t = corpus.spec.history
    hist_ids = np.empty((len(idx), t), dtype=np.int64)
    for row, i in enumerate(idx):
        hist_ids[row] = corpus.history_ids(i)
    return [cache[hist_ids, mi] for mi in range(cache.shape[1])]


def draw_sim_mask(rng, present, mask_prob):
    """Simulated missingness on complete rows; every row keeps >= 1 modality."""
    b, m = present.shape
    mask = (rng.random((b, m)) < mask_prob) & present
    for row in range(b):
        avail = present[row] & ~mask[row]
        if not avail.any():
            keep = np.flatnonzero(mask[row])[0]
            mask[row, keep] = False
    return mask


CSV_FLOAT_FMT = "%.12g"


def _fmt(x):
    return CSV_FLOAT_FMT % x


@dataclass
class TrainResult:
    model: DualFuseModel
    rows: list = field(default_factory=list)
    log_text: str = ""


def train(config, corpus, log_stream=None, progress=None):
    """Mini-batch training of the full objective; deterministic per seed.

    Writes one CSV row per epoch: epoch, cls, modal_1..M, cali, recover,
    total, train_acc, test_acc. Header comment lines record provenance.
    """
    cfg = config
    model = DualFuseModel(cfg)
    opt = Adam(model.parameters(), lr=cfg.optim.lr, betas=cfg.optim.betas,
               eps=cfg.optim.eps)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 7])))

    train_idx, test_idx = corpus.split(cfg.train_frac)
    test_view = corpus.subset(test_idx)
    m_count = model.n_modalities

    buf = io.StringIO()
    switches = cfg.ablate.active()
    buf.write(f"# config={cfg.config_hash()} seed={cfg.seed} "
              f"ablate={','.join(switches) if switches else 'none'}\n")
    header = (
        ["epoch", "cls"]
        + [f"modal_{i + 1}" for i in range(m_count)]
        + ["cali", "recover", "total", "train_acc", "test_acc"]
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)

    result = TrainResult(model=model)
    bs = cfg.optim.batch_size
    for epoch in range(cfg.optim.epochs):
        cache = build_feature_cache(model, corpus)
        order = rng.permutation(len(train_idx))
        sums = None
        hits = 0
        seen = 0
        for bstart in range(0, len(order), bs):
            idx = train_idx[order[bstart : bstart + bs]]
            arrays = [w[idx] for w in corpus.windows]
            present = corpus.present[idx]
            hist = gather_histories(corpus, cache, idx)
            sim_mask = (
                draw_sim_mask(rng, present, cfg.optim.mask_prob)
                if cfg.optim.mask_prob > 0 and not cfg.ablate.reconstruction_off
                else None
            )
            batch, _ = batch_objective(
                model, arrays, present, corpus.labels[idx], hist, sim_mask=sim_mask
            )
            _check_finite(batch.breakdown, bstart // bs)
            opt.zero_grad()
            batch.total.backward()
            for p in opt.params:  # off-path parameters this batch step by zero
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            opt.step()

            vec = np.array(
                [batch.breakdown.cls]
                + batch.breakdown.modal
                + [batch.breakdown.cali, batch.breakdown.recover, batch.breakdown.total]
            ) * len(idx)
            sums = vec if sums is None else sums + vec
            hits += int((batch.predictions == corpus.labels[idx]).sum())
            seen += len(idx)

        means = sums / seen
        test_eval = evaluate(model, test_view, with_auroc=False)
        row = (
            [str(epoch)]
            + [_fmt(v) for v in means]
            + [_fmt(hits / seen), _fmt(test_eval.metrics["accuracy"])]
        )
        writer.writerow(row)
        result.rows.append(
            {
                "epoch": epoch,
                "breakdown": LossBreakdown(
                    cls=means[0],
                    modal=list(means[1 : 1 + m_count]),
                    cali=means[1 + m_count],
                    recover=means[2 + m_count],
                    dyn=float("nan"),
                    total=means[3 + m_count],
                ),
                "train_acc": hits / seen,
                "test_acc": test_eval.metrics["accuracy"],
            }
        )
        if progress is not None:
            progress(epoch, result.rows[-1])

    result.log_text = buf.getvalue()
    if log_stream is not None:
        log_stream.write(result.log_text)
    return result


@dataclass
class EvalResult:
    metrics: dict
    report: UncertaintyReport
    probs: np.ndarray


def evaluate(model, corpus, ids=None, with_auroc=True):
    """Forward the whole view (no grad) and compute metrics plus the report."""
    ids = np.arange(corpus.n) if ids is None else np.asarray(ids)
    cache = build_feature_cache(model, corpus)
    m_count = model.n_modalities
    n = len(ids)
    preds = np.zeros(n, dtype=np.int64)
    probs = np.zeros((n, model.cfg.data.n_classes))
    r = np.zeros((n, m_count))
    s = np.zeros((n, m_count))
    w = np.zeros((n, m_count))
    uniloss = np.zeros((n, m_count))
    with no_grad():
        for start in range(0, n, 256):
            rows = np.arange(start, min(start + 256, n))
            idx = ids[rows]
            arrays = [wnd[idx] for wnd in corpus.windows]
            hist = gather_histories(corpus, cache, idx)
            out = model.forward(arrays, corpus.present[idx], hist)
            logits = out.logits.data
            ex = np.exp(logits - logits.max(axis=1, keepdims=True))
            probs[rows] = ex / ex.sum(axis=1, keepdims=True)
            preds[rows] = logits.argmax(axis=1)
            r[rows] = out.r.data
            s[rows] = out.s.data
            w[rows] = out.w.data
            labels = corpus.labels[idx]
            for mi, ul in enumerate(out.unimodal_logits):
                uniloss[rows, mi] = cross_entropy(ul, labels).data
    labels = corpus.labels[ids]
    mets = classification_metrics(preds, labels, n_classes=model.cfg.data.n_classes)
    if with_auroc:
        mets["auroc"] = macro_auroc(probs, labels)
    acc = np.exp(-(uniloss - uniloss.min(axis=1, keepdims=True)))
    acc = np.maximum(acc, LOSS_CLAMP)
    p_l = acc / acc.sum(axis=1, keepdims=True)
    report = UncertaintyReport(
        labels=labels,
        predictions=preds,
        r=r,
        s=s,
        w=w,
        unimodal_loss=uniloss,
        p_l=p_l,
        noise_levels=corpus.noise_levels[ids],
        present=corpus.present[ids],
        fluct_flags=corpus.fluct_flags[ids],
    )
    return EvalResult(metrics=mets, report=report, probs=probs)


@dataclass
class ModalityCalibration:
    modality: int
    pearson: float | None
    spearman: float | None


def calibration_diagnostic(report: UncertaintyReport):
    """Correlation of combined uncertainty r*s with unimodal loss, per modality.

    Degenerate (constant) columns report None rather than zero. Scatter rows
    cover every (sample, modality) pair.
    """
    m_count = report.r.shape[1]
    rows = []
    stats = []
    for mi in range(m_count):
        u = report.r[:, mi] * report.s[:, mi]
        losses = report.unimodal_loss[:, mi]
        for i in range(len(u)):
            rows.append((i, mi, float(u[i]), float(losses[i])))
        stats.append(
            ModalityCalibration(
                modality=mi,
                pearson=pearson(u, losses),
                spearman=spearman(u, losses),
            )
        )
    return stats, rows
