import math

import numpy as np
import pytest

from qpskrx.analytic import SplitRatio
from qpskrx.emulator import (
    CAMPAIGN_DTYPE,
    CampaignConfig,
    ProbeSequence,
    cell_error_model,
    estimate_error_rates,
    generate_campaign,
    hd_k_extraction,
    hd_od_extraction,
    iter_shot_records,
    postselect_feedforward,
)
from qpskrx.simulator import ImperfectionModel, RngContract

SEQ = ProbeSequence(n_amplitudes=4, alpha2_max=1.2, n_blocks=3, calibration_pulses=5)
CFG = CampaignConfig(runs_per_displacement=400, displacement_steps=(0.0, 0.4, 0.8))
IMP = ImperfectionModel(dark_prob=0.0272)


def campaign(seed=0, **kw):
    return list(generate_campaign(SEQ, CFG, IMP, RngContract(seed), **kw))


class TestProbeSequence:
    def test_defaults(self):
        seq = ProbeSequence()
        assert seq.amplitudes.size == 34
        assert seq.amplitudes[-1] == pytest.approx(1.8)
        assert seq.phase_offsets.size == 9
        assert seq.phase_offsets[-1] == pytest.approx(math.pi / 4)
        assert seq.length == 16 + 9 * 34 * 4

    def test_explicit_values(self):
        seq = ProbeSequence(alpha2_values=(0.2, 0.5))
        assert seq.amplitudes.tolist() == [0.2, 0.5]

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            ProbeSequence(alpha2_values=(0.5, 0.2))


class TestCampaign:
    def test_size_and_dtype(self):
        batches = campaign()
        total = sum(b.size for b in batches)
        assert total == len(CFG.displacement_steps) * CFG.runs_per_displacement * SEQ.probe_length
        assert batches[0].dtype == CAMPAIGN_DTYPE

    def test_calibration_slots_skipped(self):
        first = campaign()[0]
        assert first["shot"][0] == SEQ.calibration_pulses
        assert np.all(first["shot"] % SEQ.length >= SEQ.calibration_pulses)

    def test_batching_invariant(self):
        a = np.concatenate(campaign(runs_per_batch=256))
        b = np.concatenate(campaign(runs_per_batch=37))
        assert np.array_equal(a, b)

    def test_commanded_side_is_random(self):
        rec = np.concatenate(campaign())
        assert rec["cmd_upper"].mean() == pytest.approx(0.5, abs=0.01)

    def test_retention(self):
        batches = campaign()
        kept = sum(b.size for b in postselect_feedforward(batches))
        total = sum(b.size for b in batches)
        assert kept / total == pytest.approx(0.5, abs=0.01)

    def test_postselected_shots_are_feedforward(self):
        for b in postselect_feedforward(campaign()):
            assert np.array_equal(b["hd_upper"], b["cmd_upper"])

    def test_shot_records(self):
        recs = list(iter_shot_records([campaign()[0][:5]]))
        assert len(recs) == 5
        assert all(r.decision in (1, 2, 3, 4) for r in recs)


class TestEstimates:
    def test_cells(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        assert len(cells) == SEQ.amplitudes.size * SEQ.n_blocks * len(CFG.displacement_steps)
        assert all(r.source == "emulated" for r in cells)
        assert all(r.err_lo < r.err < r.err_hi for r in cells if r.flag != "empty")

    def test_zero_amplitude_cells(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        zero = [r for r in cells if r.alpha2 == 0.0]
        assert np.mean([r.err for r in zero]) == pytest.approx(0.75, abs=0.03)

    def test_coverage(self):
        # campaign-sized statistics per cell on a reduced sequence
        cfg = CampaignConfig(runs_per_displacement=4000, displacement_steps=(0.0, 0.4, 0.8))
        batches = generate_campaign(SEQ, cfg, IMP, RngContract(1))
        cells = estimate_error_rates(postselect_feedforward(batches), SEQ, cfg, IMP)
        split = cfg.split_ratio
        hits = [
            r.err_lo <= cell_error_model(math.sqrt(r.alpha2), math.sqrt(r.gamma2), r.phi, split, IMP) <= r.err_hi
            for r in cells
        ]
        assert np.mean(hits) >= 0.9

    def test_empty_cells_flagged(self):
        cells = estimate_error_rates([], SEQ, CFG, IMP)
        assert all(r.flag == "empty" for r in cells)
        assert all(math.isnan(r.err) for r in cells)

    def test_low_stat_flag(self):
        cfg = CampaignConfig(runs_per_displacement=20, displacement_steps=(0.5,), min_shots=100)
        batches = generate_campaign(SEQ, cfg, IMP, RngContract(0))
        cells = estimate_error_rates(postselect_feedforward(batches), SEQ, cfg, IMP)
        assert all(r.flag == "low-stat" for r in cells)

    def test_uncertainty_floor(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        assert all(r.err_hi - r.err >= CFG.repeat_fluctuation for r in cells)


def single_cell(cfg, phase=math.pi / 4, imp=IMP, seed=0):
    seq = ProbeSequence(alpha2_values=(0.97,), n_blocks=1, phase_max=phase, calibration_pulses=0)
    cells = estimate_error_rates(postselect_feedforward(generate_campaign(seq, cfg, imp, RngContract(seed))), seq, cfg, imp)
    return cells.rows[0]


class TestErrorBars:
    def test_binomial_only(self):
        cfg = CampaignConfig(
            runs_per_displacement=2000, displacement_steps=(0.5,),
            uncertainty_alpha=0.0, uncertainty_gamma=0.0, repeat_fluctuation=0.0,
        )
        row = single_cell(cfg)
        assert row.err_hi - row.err == pytest.approx(math.sqrt(row.err * (1 - row.err) / row.n))

    def test_default_scale(self):
        row = single_cell(CampaignConfig(displacement_steps=(0.5,)), imp=ImperfectionModel.laboratory())
        assert 0.005 <= row.err_hi - row.err <= 0.015

    def test_flat_minimum_insensitive_to_gamma_uncertainty(self):
        # at the optimal displacement the gamma slope vanishes
        base = dict(runs_per_displacement=2000, displacement_steps=(0.856,))
        a = single_cell(CampaignConfig(**base), phase=0.5801, imp=ImperfectionModel())
        b = single_cell(CampaignConfig(**base, uncertainty_gamma=0.078), phase=0.5801, imp=ImperfectionModel())
        assert a.err == b.err
        assert (b.err_hi - b.err) / (a.err_hi - a.err) < 1.2


class TestExtraction:
    def test_one_row_per_amplitude(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        k = hd_k_extraction(cells, IMP)
        od = hd_od_extraction(cells)
        assert sorted(r.alpha2 for r in k) == sorted(SEQ.amplitudes.tolist())
        assert {r.receiver for r in k} == {"HD-K"}
        assert {r.receiver for r in od} == {"HD-OD"}

    def test_od_not_worse_than_k(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        k = {r.alpha2: r.err for r in hd_k_extraction(cells, IMP)}
        for r in hd_od_extraction(cells):
            assert r.err <= k[r.alpha2]

    def test_single_step_extractions_coincide(self):
        cfg = CampaignConfig(runs_per_displacement=200, displacement_steps=(0.5,))
        seq = ProbeSequence(n_amplitudes=3, alpha2_max=1.0, n_blocks=1)
        cells = estimate_error_rates(postselect_feedforward(generate_campaign(seq, cfg, IMP, RngContract(0))), seq, cfg, IMP)
        k = hd_k_extraction(cells, IMP)
        od = hd_od_extraction(cells)
        assert [r.err for r in k] == [r.err for r in od]

    def test_k_picks_nulling_displacement(self):
        cells = estimate_error_rates(postselect_feedforward(campaign()), SEQ, CFG, IMP)
        row = next(r for r in hd_k_extraction(cells, IMP) if r.alpha2 == pytest.approx(0.8))
        # t^2 |alpha|^2 = 0.53 * 0.8 = 0.424 lies closest to the 0.4 step, at phase pi/4
        assert row.gamma2 == pytest.approx(0.4)
        assert row.phi == pytest.approx(math.pi / 4)


class TestCellModel:
    def test_vacuum(self):
        assert cell_error_model(0.0, 0.7, 0.3, SplitRatio(0.53), ImperfectionModel()) == pytest.approx(0.75)

    def test_dark_raises(self):
        args = (1.0, 0.9, 0.6, SplitRatio(0.53))
        assert cell_error_model(*args, IMP) > cell_error_model(*args, ImperfectionModel())
