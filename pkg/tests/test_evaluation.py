import math

import numpy as np
import pytest

from etp.Localization import Detection
from etp.Timeline import GroundTruthInstance, TemporalInterval
from etp.Utils.errors import InputError
from evaluate import THUMOS_ALPHAS, average_precision, boundary_error, map_at, match_detections, proposal_recall
from experiment_results import compare_runs, format_table, report_frame, write_report


def span(start, end):
    return TemporalInterval(start, end)


def det(start, end, score, label=0):
    return Detection(span(start, end), label, score)


def gt(start, end, label=0):
    return GroundTruthInstance(span(start, end), label)


def oracle_ap(flags, num_gt):
    """Sum of precision over every rank prefix that adds a true positive."""
    terms = []
    for k in range(1, len(flags) + 1):
        if flags[k - 1]:
            terms.append((sum(flags[:k]) / k) / num_gt)
    return math.fsum(terms) if num_gt else 0.0


def random_case(rng, max_dets=20, max_gts=10, num_frames=300):
    def interval():
        start = int(rng.integers(0, num_frames - 10))
        return span(start, start + int(rng.integers(5, 80)))

    gts = [GroundTruthInstance(interval(), 0) for _ in range(int(rng.integers(0, max_gts + 1)))]
    dets = [Detection(interval(), 0, float(rng.integers(1, 20)) / 20.0) for _ in range(int(rng.integers(0, max_dets + 1)))]
    dets.sort(key=lambda d: (-d.score, d.interval.start, d.interval.length))
    return dets, gts


class TestMatchDetections:

    def test_examples(self):
        assert match_detections([det(0, 100, 0.9)], [gt(0, 100)], 0.5) == [True]
        assert match_detections([det(0, 100, 0.9), det(0, 100, 0.8)], [gt(0, 100)], 0.5) == [True, False]
        assert match_detections([det(0, 45, 0.9)], [gt(0, 100)], 0.5) == [False]

    def test_prefers_highest_overlap(self):
        flags = match_detections([det(0, 100, 0.9), det(40, 100, 0.8)], [gt(50, 100), gt(0, 90)], 0.5)
        assert flags == [True, True]

    def test_tie_goes_to_earliest_groundtruth(self):
        gts = [gt(20, 30), gt(0, 10)]
        record = map_at({"v": [det(5, 25, 0.9)]}, {"v": gts}, [0.1], keep_matches=True).matches
        assert record[0].matched_gt == 0


class TestAveragePrecision:

    def test_examples(self):
        assert average_precision([True], 1) == 1.0
        assert average_precision([], 2) == 0.0
        assert average_precision([False, True], 1) == 0.5

    def test_matches_prefix_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            dets, gts = random_case(rng)
            alpha = float(rng.choice(THUMOS_ALPHAS))
            flags = match_detections(dets, gts, alpha)
            assert average_precision(flags, len(gts)) == oracle_ap(flags, len(gts))

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            dets, gts = random_case(rng)
            aps = [average_precision(match_detections(dets, gts, a), len(gts)) for a in np.linspace(0.1, 0.9, 9)]
            assert all(x >= y - 1e-12 for x, y in zip(aps, aps[1:]))

    def test_score_scaling_keeps_ap(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            dets, gts = random_case(rng)
            scaled = [Detection(d.interval, d.label, d.score * 7.5) for d in dets]
            before = map_at({"v": dets}, {"v": gts}, THUMOS_ALPHAS, ["a"])
            after = map_at({"v": scaled}, {"v": gts}, THUMOS_ALPHAS, ["a"])
            assert before.ap == after.ap


class TestMapAt:

    gts = {"v1": [gt(0, 50, 0), gt(100, 150, 1)], "v2": [gt(20, 80, 0)]}

    def test_perfect_detector(self):
        dets = {v: [Detection(g.interval, g.label, 0.9) for g in items] for v, items in self.gts.items()}
        report = map_at(dets, self.gts, class_names=["a", "b"])
        assert report.mean_ap == [1.0] * len(THUMOS_ALPHAS)
        assert report.num_gt == [2, 1]
        assert report.map_at(0.5) == 1.0

    def test_no_detections(self):
        report = map_at({}, self.gts, class_names=["a", "b"])
        assert report.mean_ap == [0.0] * len(THUMOS_ALPHAS)

    def test_one_perfect_class(self):
        dets = {"v1": [det(0, 50, 0.9, 0)], "v2": [det(20, 80, 0.8, 0)]}
        report = map_at(dets, self.gts, [0.5], ["a", "b"])
        assert report.ap == [[1.0], [0.0]]
        assert report.mean_ap == [0.5]

    def test_classes_without_groundtruth_are_skipped(self):
        dets = {"v1": [det(0, 50, 0.9, 0), det(200, 220, 0.5, 2)]}
        report = map_at(dets, {"v1": [gt(0, 50, 0)]}, [0.5], ["a", "b", "c"])
        assert report.mean_ap == [1.0]

    def test_matching_stays_within_a_video(self):
        dets = {"v2": [det(0, 50, 0.9, 0)]}
        report = map_at(dets, {"v1": [gt(0, 50, 0)], "v2": []}, [0.5], ["a"])
        assert report.mean_ap == [0.0]

    def test_unknown_label(self):
        with pytest.raises(InputError):
            map_at({"v1": [det(0, 50, 0.9, 3)]}, self.gts, [0.5], ["a", "b"])

    def test_matches_are_recorded(self):
        dets = {"v1": [det(0, 50, 0.9, 0), det(0, 48, 0.4, 0)]}
        report = map_at(dets, {"v1": [gt(0, 50, 0)]}, [0.5], ["a"], keep_matches=True)
        assert [(m.score, m.matched_gt) for m in report.matches] == [(0.9, 0), (0.4, None)]


class TestProposalMetrics:

    gts = {"v": [gt(0, 100), gt(200, 300)]}

    def test_recall(self):
        assert proposal_recall({"v": [span(0, 100)]}, self.gts, 0.5) == 0.5
        assert proposal_recall({"v": [span(0, 100), span(210, 300)]}, self.gts, 0.5) == 1.0
        assert proposal_recall({}, self.gts, 0.5) == 0.0
        assert proposal_recall({}, {}, 0.5) == 0.0

    def test_boundary_error(self):
        assert boundary_error({"v": [span(4, 100), span(200, 310)]}, self.gts) == pytest.approx((2.0 + 5.0) / 2)
        assert boundary_error({"v": [span(500, 600)]}, self.gts) is None


class TestReportTable:

    def report(self):
        dets = {"v": [det(0, 50, 0.9, 0), det(60, 70, 0.3, 1)]}
        return map_at(dets, {"v": [gt(0, 50, 0), gt(100, 140, 1)]}, [0.3, 0.5], ["run", "jump"])

    def test_frame(self):
        df = report_frame(self.report())
        assert list(df.index) == ["run", "jump", "mAP"]
        assert list(df.columns) == ["0.30", "0.50", "num_gt"]
        assert df.loc["run", "0.50"] == 100.0 and df.loc["jump", "0.30"] == 0.0
        assert df.loc["mAP", "0.50"] == 50.0 and df.loc["mAP", "num_gt"] == 2
        assert "mAP" in format_table(df)

    def test_write_report(self, tmp_path):
        prefix = str(tmp_path / "out" / "report")
        table = write_report(self.report(), prefix)
        assert (tmp_path / "out" / "report.txt").read_text(encoding="utf-8") == table
        assert (tmp_path / "out" / "report.json").exists()

    def test_compare_runs(self):
        report = self.report()
        df = compare_runs({"full": report, "ablation": report})
        assert list(df.index) == ["full", "ablation"]
        assert df.loc["full", "0.50"] == 50.0
