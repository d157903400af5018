"""Full fusion classifier: encoders, reconstruction, weighting, attention."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import FeatureGaussian, ModalityEncoder, input_uncertainty
from .fusion import FusionStack, modality_weights, tokenize_and_weight, uniform_weights
from .numerics import Linear, Module, Tensor, concat, relu
from .reconstruction import ModalityDecoder, reconstruct


@dataclass
class ForwardOutputs:
    logits: Tensor                 # (B, C)
    unimodal_logits: list          # per modality (B, C)
    z_final: list                  # per modality (B, D)
    r: Tensor                      # (B, M)
    s: Tensor                      # (B, M)
    w: Tensor                      # (B, M)
    recover_terms: list            # (z_hat_masked_rows, z_target_rows) pairs
    effective_present: np.ndarray  # (B, M) after simulated masking


class TaskHead(Module):
    """Four-layer classifier over the pooled fused tokens."""

    def __init__(self, rng, dim, n_classes):
        self.fc1 = Linear(rng, dim, dim)
        self.fc2 = Linear(rng, dim, dim)
        self.fc3 = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, n_classes)

    def __call__(self, x):
        h = relu(self.fc1(x))
        h = relu(self.fc2(h))
        h = relu(self.fc3(h))
        return self.out(h)


class DualFuseModel(Module):
    def __init__(self, config, seed=None):
        cfg = config
        self.cfg = cfg
        rng = np.random.Generator(np.random.PCG64(cfg.seed if seed is None else seed))
        dim = cfg.model.dim
        mods = cfg.data.modalities
        self.n_modalities = len(mods)
        self.dim = dim
        self.encoders = [ModalityEncoder(rng, m, dim) for m in mods]
        token_dim = dim // cfg.model.tokens_per_modality
        self.fusion = FusionStack(
            rng,
            token_dim,
            cfg.model.layers,
            self.n_modalities,
            k_tok=cfg.model.tokens_per_modality,
            heads=cfg.model.heads,
            tied=cfg.ablate.tied_projections,
            paper_rule=cfg.ablate.paper_layer_rule,
        )
        self.task_head = TaskHead(rng, token_dim, cfg.data.n_classes)
        self.unimodal_heads = [Linear(rng, dim, cfg.data.n_classes) for _ in mods]
        self.decoders = [ModalityDecoder(rng, dim) for _ in mods]

    # -- feature paths ---------------------------------------------------

    def encode_windows(self, window_arrays):
        """Raw trunk features per modality; absent rows carry placeholder."""
        return [
            enc.encode(Tensor(x)) for enc, x in zip(self.encoders, window_arrays)
        ]

    def final_features(self, z_raw, present):
        """Swap reconstructed features into rows whose windows are absent.

        present: (B, M) bool. Returns (z_final list, z_hat list or None per
        modality). When everything is present the raw features pass through.
        """
        ab = self.cfg.ablate
        m_count = self.n_modalities
        b = present.shape[0]
        if present.all():
            return list(z_raw), [None] * m_count
        gauss_raw = [enc.current_gaussian(z) for enc, z in zip(self.encoders, z_raw)]
        z_final = []
        z_hats = []
        avail = present.astype(float)
        for mi in range(m_count):
            col = present[:, mi]
            if col.all():
                z_final.append(z_raw[mi])
                z_hats.append(None)
                continue
            if ab.reconstruction_off:
                z_hat = Tensor(np.zeros((b, self.dim)))
            else:
                z_hat = reconstruct(
                    mi,
                    z_raw,
                    gauss_raw,
                    avail,
                    self.decoders[mi],
                    normalized=not ab.normalization_off,
                    average=ab.recon_average,
                    need=~col,
                )
            keep = Tensor(col.astype(float).reshape(b, 1))
            fill = Tensor((~col).astype(float).reshape(b, 1))
            z_final.append(z_raw[mi] * keep + z_hat * fill)
            z_hats.append(z_hat)
        return z_final, z_hats

    def uncertainties(self, z_final, hist_features):
        """Per-modality input/fluctuation uncertainty from the final features.

        hist_features: (B, T, D) numpy array per modality (cached constants).
        """
        rs, ss = [], []
        b = z_final[0].shape[0]
        for mi, enc in enumerate(self.encoders):
            g_cur = enc.current_gaussian(z_final[mi])
            seq = concat(
                [Tensor(hist_features[mi]), z_final[mi].reshape(b, 1, self.dim)],
                axis=1,
            )
            g_tmp = enc.temporal_gaussian(seq)
            rs.append(input_uncertainty(g_cur).reshape(b, 1))
            ss.append(input_uncertainty(g_tmp).reshape(b, 1))
        return concat(rs, axis=1), concat(ss, axis=1)

    def weights(self, r, s):
        ab = self.cfg.ablate
        if ab.static_weights:
            return uniform_weights(r.shape[0], self.n_modalities)
        return modality_weights(
            r, s, drop_input=ab.uncertainty_off, drop_fluctuation=ab.fluctuation_off
        )

    def classify(self, z_final, w):
        tokens, _ = tokenize_and_weight(
            z_final,
            w,
            k_tok=self.cfg.model.tokens_per_modality,
            scale_inputs=not self.cfg.ablate.input_scaling_off,
        )
        fused = self.fusion(tokens, w)
        pooled = fused.mean(axis=1)
        return self.task_head(pooled)

    def forward(self, window_arrays, present, hist_features, sim_mask=None,
                frozen_recover_targets=None):
        """Full pipeline for one batch.

        window_arrays: per modality (B, W, C) numpy arrays (absent rows zero).
        present: (B, M) bool from the corpus.
        hist_features: per modality (B, T, D) cached feature histories.
        sim_mask: optional (B, M) bool of simulated missingness on complete
        rows, used to supervise reconstruction during training.
        frozen_recover_targets: optional per-modality arrays overriding the
        (detached) reconstruction targets, for derivative checks.
        """
        z_raw = self.encode_windows(window_arrays)
        eff_present = present.copy()
        recover_terms = []
        if sim_mask is not None and sim_mask.any():
            eff_present &= ~sim_mask
        z_final, z_hats = self.final_features(z_raw, eff_present)
        if sim_mask is not None and not self.cfg.ablate.reconstruction_off:
            b = present.shape[0]
            for mi in range(self.n_modalities):
                rows = sim_mask[:, mi] & present[:, mi]
                if not rows.any() or z_hats[mi] is None:
                    continue
                sel = Tensor(rows.astype(float).reshape(b, 1))
                if frozen_recover_targets is not None:
                    target = Tensor(frozen_recover_targets[mi]) * sel.data
                else:
                    target = z_raw[mi].detach() * sel.data
                recover_terms.append((z_hats[mi] * sel, target))
        r, s = self.uncertainties(z_final, hist_features)
        w = self.weights(r, s)
        logits = self.classify(z_final, w)
        unimodal = [head(z) for head, z in zip(self.unimodal_heads, z_final)]
        return ForwardOutputs(
            logits=logits,
            unimodal_logits=unimodal,
            z_final=z_final,
            r=r,
            s=s,
            w=w,
            recover_terms=recover_terms,
            effective_present=eff_present,
        )
