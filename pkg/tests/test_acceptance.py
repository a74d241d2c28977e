"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Criteria 3 and 4 train real (toy sized) models and dominate
the runtime of the whole test session."""

import math
from dataclasses import replace
from itertools import permutations

import numpy as np
import pytest
import torch

from helpers import finite_difference_check
from stepsep.config import (CodecConfig, CorpusConfig, SeparatorConfig,
                            VariantSpec, VARIANT_KINDS, toy_train_config)
from stepsep.corpus import make_corpus
from stepsep.model import build_model
from stepsep.objective import pit_loss, sdr_simple, si_snr
from stepsep.separator import MaskEstimator, overlap_add, segment_chunks
from stepsep.trainer import evaluate, load_checkpoint, run_ablation, train

torch.set_num_threads(1)


def _report(criterion, description, ok):
    print("\n[%s] criterion %s: %s" % ("PASS" if ok else "FAIL", criterion, description))
    assert ok, "criterion %s failed: %s" % (criterion, description)


def _toy_codec():
    return CodecConfig(n_coarse_basis=16, coarse_kernel=16, coarse_stride=8,
                       n_fine_basis=8, fine_kernel=2, fine_stride=1, n_groups=2)


def _toy_sep(kind):
    return SeparatorConfig(block_kind=kind, n_blocks=1, chunk_len=4,
                           inner_dim=8, rnn_hidden=8, attn_heads=2)


class TestCriterion1Invariants:
    """Structural invariant suite (runtime well under 2 minutes)."""

    def test_overlap_add_inversion(self):
        ok = True
        for channels, frames, L in ((1, 8, 4), (16, 37, 8), (5, 101, 50), (3, 1, 6)):
            x = torch.randn(1, channels, frames)
            chunks, pad = segment_chunks(x, L)
            ok &= bool(torch.allclose(overlap_add(chunks, pad), x, atol=1e-6))
        _report(1, "overlap-add inverts segmentation (<=1e-6)", ok)

    def test_si_snr_scale_invariance(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(10):
            est, ref = rng.standard_normal(80), rng.standard_normal(80)
            base = si_snr(est, ref).item()
            for alpha in (1e-2, 0.5, 10.0):
                worst = max(worst, abs(si_snr(alpha * est, ref).item() - base))
        _report(1, "SI-SNR scale invariance (worst %.2e dB)" % worst, worst < 1e-6)

    def test_pit_dominates_fixed_permutations(self):
        rng = np.random.default_rng(1)
        ok = True
        for D in (2, 3):
            ests = [rng.standard_normal(60) for _ in range(D)]
            tgts = [rng.standard_normal(60) for _ in range(D)]
            loss, _ = pit_loss(ests, tgts)
            for p in permutations(range(D)):
                fixed = -sum(si_snr(ests[p[i]], tgts[i]).item() for i in range(D)) / D
                ok &= loss.item() <= fixed + 1e-12
                permuted, _ = pit_loss(ests, [tgts[i] for i in p])
                ok &= abs(permuted.item() - loss.item()) < 1e-12
        _report(1, "PIT <= every fixed permutation, target-permutation invariant", ok)

    def test_mask_nonnegativity(self):
        ok = True
        for seed in range(5):
            torch.manual_seed(seed)
            est = MaskEstimator(_toy_sep("dprnn"), in_dim=8)
            ok &= bool((est(torch.randn(1, 8, 13)) >= 0).all())
        _report(1, "mask nonnegativity", ok)

    def test_group_equivariance(self):
        from stepsep.codec import FineCodec
        cfg = CodecConfig(n_coarse_basis=16, n_fine_basis=8, n_groups=4,
                          fine_kernel=2, fine_stride=1)
        codec = FineCodec(cfg, generator=torch.Generator().manual_seed(0))
        f = torch.randn(1, 16, 9)
        ok = True
        for perm in permutations(range(4)):
            grouped = f.reshape(1, 4, 4, 9)
            out_p = codec.encode(grouped[:, list(perm)].reshape(1, 16, 9))
            ok &= bool(torch.allclose(codec.encode(f)[:, list(perm)], out_p, atol=1e-6))
        _report(1, "group equivariance of the second-order encoder", ok)

    def test_merge_linearity(self):
        model = build_model(VariantSpec(kind="full"), _toy_codec(), _toy_sep("dprnn"))
        latents, _ = model.coarse_forward(torch.randn(1, 64))
        fine = model.fine.encode(latents.reshape(2, 16, 7))
        comps = fine.reshape(4, 8, 6).unsqueeze(1) * model.sep_refine(fine.reshape(4, 8, 6))
        merged = comps.reshape(1, 2, 2, 2, 8, 6).sum(dim=1)
        ok = True
        for alpha in (0.25, 2.0, -1.5):
            scaled = (alpha * comps).reshape(1, 2, 2, 2, 8, 6).sum(dim=1)
            ok &= bool(torch.allclose(scaled, alpha * merged, atol=1e-5))
        _report(1, "merge linearity", ok)

    def test_length_preservation_all_variants(self):
        ok = True
        for kind in VARIANT_KINDS:
            model = build_model(VariantSpec(kind=kind), _toy_codec(), _toy_sep("dprnn"))
            for length in (64, 317):
                out = model(torch.randn(1, length))
                ok &= out.coarse_estimates.shape[-1] == length
                if out.refined_estimates is not None:
                    ok &= out.refined_estimates.shape[-1] == length
        _report(1, "length preservation for all 9 variants", ok)


class TestCriterion2GradientChecks:
    """Full two-phase graph vs central finite differences, float64."""

    @pytest.mark.parametrize("kind", ["dprnn", "dptnet"])
    def test_full_model_gradients(self, kind):
        model = build_model(VariantSpec(kind="full"), _toy_codec(),
                            _toy_sep(kind), seed=0).double()
        torch.manual_seed(0)
        x = torch.randn(1, 64, dtype=torch.float64)
        tgt = torch.randn(2, 64, dtype=torch.float64)

        def loss_fn():
            out = model(x)
            lc, _ = pit_loss(out.coarse_estimates[0], tgt)
            lr, _ = pit_loss(out.refined_estimates[0], tgt)
            return lc + lr

        err = finite_difference_check(loss_fn, model, n_samples=60, h=1e-6)
        _report(2, "%s full-graph gradient check (worst rel err %.2e)" % (kind, err),
                err < 1e-3)


@pytest.fixture(scope="module")
def learn_corpus(tmp_path_factory):
    # clean two-band mixtures are separable by coarse masking alone, so the
    # refining phase has no residual error left to remove; strong background
    # noise keeps both phases honest
    root = tmp_path_factory.mktemp("learn_corpus")
    cfg = CorpusConfig(n_speakers_pool=20, n_train=200, n_valid=40,
                       n_test=40, duration_s=1.0, sample_rate=8000,
                       noise_snr_range=(-12.0, -6.0), seed=0)
    return make_corpus(cfg, root)


class TestCriterion3ToyLearning:
    def test_dprnn_toy_training_separates(self, learn_corpus, tmp_path):
        cfg = replace(toy_train_config(block_kind="dprnn", variant_kind="full"),
                      epochs=12, max_steps=2000)

        def good_enough(h):
            gap = h[-1]["valid_delta_si_snr"] - h[-1]["valid_delta_si_snr_coarse"]
            return h[-1]["valid_delta_si_snr"] >= 6.0 and gap >= 0.10

        ckpt, history = train(cfg, learn_corpus, tmp_path / "toy_run",
                              stop_fn=good_enough)
        refined_v = history[-1]["valid_delta_si_snr"]
        coarse_v = history[-1]["valid_delta_si_snr_coarse"]
        test_refined = evaluate(ckpt, learn_corpus, "test")["refined"]["mean_delta_si_snr"]
        _report(3, "toy training: held-out refined %.2f dB (>= +5), coarse "
                   "%.2f dB, test refined %.2f dB, %d steps"
                   % (refined_v, coarse_v, test_refined, history[-1]["step"]),
                refined_v >= 5.0 and refined_v >= coarse_v and test_refined >= 5.0)


@pytest.fixture(scope="module")
def noisy_corpus(tmp_path_factory):
    # moderate noise for the same reason as learn_corpus: keep the task hard
    # enough that the architectural differences are measurable
    root = tmp_path_factory.mktemp("noisy_corpus")
    cfg = CorpusConfig(n_speakers_pool=20, n_train=200, n_valid=16,
                       n_test=40, duration_s=1.0, sample_rate=8000,
                       noise_snr_range=(-6.0, 3.0), seed=0)
    return make_corpus(cfg, root)


class TestCriterion4AblationTrend:
    def test_variant_ordering(self, noisy_corpus, tmp_path):
        base_cfg = toy_train_config(block_kind="dprnn")
        base_cfg = replace(base_cfg, epochs=14,
                           codec=replace(base_cfg.codec, n_groups=2))
        table = run_ablation(["base", "two_phase_1d", "full"], base_cfg,
                             noisy_corpus, tmp_path / "ablation",
                             seeds=(0, 1, 2), block_budget=4)
        means = {row["variant"]: row["mean_delta_si_snr"] for row in table}
        gap_hi = means["full"] - means["two_phase_1d"]
        gap_lo = means["two_phase_1d"] - means["base"]
        _report(4, "ablation trend full %.2f >= two_phase_1d %.2f >= base %.2f "
                   "(gaps %.2f / %.2f, floor -0.2 dB)"
                   % (means["full"], means["two_phase_1d"], means["base"],
                      gap_hi, gap_lo),
                gap_hi >= -0.2 and gap_lo >= -0.2)


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("det_corpus")
    cfg = CorpusConfig(n_speakers_pool=8, n_train=8, n_valid=2, n_test=2,
                       duration_s=0.25, seed=1)
    return make_corpus(cfg, root)


class TestCriterion5Determinism:
    def _cfg(self):
        from stepsep.config import TrainConfig
        return TrainConfig(
            epochs=1, batch_size=4, seed=7, segment_s=0.25,
            variant=VariantSpec(kind="full"), codec=_toy_codec(),
            separator=replace(_toy_sep("dprnn"), chunk_len=10))

    def test_identical_runs_and_checkpoint_round_trip(self, tiny_corpus, tmp_path):
        ckpt_a, hist_a = train(self._cfg(), tiny_corpus, tmp_path / "a")
        ckpt_b, hist_b = train(self._cfg(), tiny_corpus, tmp_path / "b")
        same_losses = (hist_a[0]["loss_coarse"] == hist_b[0]["loss_coarse"]
                       and hist_a[0]["loss_refine"] == hist_b[0]["loss_refine"])
        rep_a = evaluate(ckpt_a, tiny_corpus, "test")
        rep_b = evaluate(ckpt_b, tiny_corpus, "test")
        model, _, _ = load_checkpoint(ckpt_a)
        rep_reload = evaluate(model, tiny_corpus, "test")
        _report(5, "seeded reproducibility + exact checkpoint round trip",
                same_losses and rep_a == rep_b and rep_a == rep_reload)


class TestCriterion6WorkedValues:
    def test_hand_computed_metrics(self):
        v1 = si_snr([1.0, 1.0], [1.0, 0.0]).item()
        v2 = si_snr([1.0, 0.0], [3.0, 4.0]).item()
        v3 = sdr_simple([1.0, 0.0], [3.0, 4.0]).item()
        ok = (abs(v1) < 1e-9
              and v2 == pytest.approx(-2.499, abs=1e-3)
              and v2 == pytest.approx(10 * math.log10(0.36 / 0.64), abs=1e-6)
              and v3 == pytest.approx(0.969, abs=1e-3)
              and v3 == pytest.approx(10 * math.log10(25 / 20), abs=1e-6))
        _report(6, "worked metric values (0 dB / -2.499 dB / +0.969 dB)", ok)
