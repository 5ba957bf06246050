import numpy as np
import pytest

from graphtrack import BBox, DataFormatError, SequenceSpec, synth_generate
from graphtrack.mot_files import (
    align_frames,
    load_config_file,
    load_gt,
    load_mot,
    load_results,
    write_detections,
    write_gt,
    write_results,
)
from graphtrack.tracker import FrameEvents, FrameResult, TrackOutput


class TestLoadMot:
    def test_single_line(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("1,-1,10,20,30,40,0.9\n")
        with pytest.warns(UserWarning):
            first, frames = load_mot(path, embedding_dim=4)
        assert first == 1
        assert len(frames) == 1
        d = frames[0][0]
        assert d.box == BBox(10, 20, 40, 60)
        assert d.score == pytest.approx(0.9)
        assert np.array_equal(d.embedding, np.zeros(4))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("")
        first, frames = load_mot(path, embedding_dim=4)
        assert frames == []

    def test_dense_frame_range(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("2,-1,0,0,5,5,0.9\n5,-1,1,1,5,5,0.8\n")
        with pytest.warns(UserWarning):
            first, frames = load_mot(path, embedding_dim=2)
        assert first == 2
        assert [len(f) for f in frames] == [1, 0, 0, 1]

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("1,-1,10,20,30,40,0.9\n1,-1,oops,20,30,40,0.9\n")
        with pytest.raises(DataFormatError, match=":2"):
            load_mot(path, embedding_dim=2)

    def test_too_few_fields(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("1,-1,10,20\n")
        with pytest.raises(DataFormatError, match=":1"):
            load_mot(path, embedding_dim=2)

    def test_sidecar_row_mismatch_names_counts(self, tmp_path):
        det = tmp_path / "det.txt"
        det.write_text("1,-1,10,20,30,40,0.9\n1,-1,50,20,30,40,0.8\n")
        emb = tmp_path / "emb.txt"
        emb.write_text("1.0,0.0\n")
        with pytest.raises(DataFormatError, match="1 embedding rows for 2 detections"):
            load_mot(det, emb)

    def test_sidecar_loaded_in_order(self, tmp_path):
        det = tmp_path / "det.txt"
        det.write_text("1,-1,10,20,30,40,0.9\n1,-1,50,20,30,40,0.8\n")
        emb = tmp_path / "emb.txt"
        emb.write_text("1.0,0.0\n0.0,1.0\n")
        _, frames = load_mot(det, emb)
        assert np.array_equal(frames[0][0].embedding, [1.0, 0.0])
        assert np.array_equal(frames[0][1].embedding, [0.0, 1.0])


class TestWriteResults:
    def result(self, outputs):
        return FrameResult(outputs=outputs, events=FrameEvents())

    def test_roundtrip_boxes_within_tolerance(self, tmp_path):
        outputs = [
            TrackOutput(3, BBox(10.12345, 20.5, 44.25, 60.125), 0.875, False),
            TrackOutput(1, BBox(0.5, 1.5, 9.5, 21.5), 0.25, True),
        ]
        path = tmp_path / "res.txt"
        write_results([self.result(outputs)], path)
        first, frames = load_results(path)
        assert first == 1
        loaded = {o.id: o for o in frames[0]}
        for out in outputs:
            got = loaded[out.id]
            for attr in ("x_left", "y_top", "x_right", "y_bottom"):
                assert getattr(got.box, attr) == pytest.approx(
                    getattr(out.box, attr), abs=1e-4
                )
            assert got.score == pytest.approx(out.score, abs=1e-4)

    def test_ids_ascending_within_frame(self, tmp_path):
        outputs = [
            TrackOutput(5, BBox(0, 0, 5, 5), 0.9, False),
            TrackOutput(2, BBox(10, 10, 15, 15), 0.8, False),
        ]
        path = tmp_path / "res.txt"
        write_results([self.result(outputs)], path)
        ids = [int(line.split(",")[1]) for line in path.read_text().splitlines()]
        assert ids == sorted(ids)

    def test_exact_output_format(self, tmp_path):
        outputs = [TrackOutput(1, BBox(10.0, 20.0, 40.0, 60.0), 0.9, True)]
        path = tmp_path / "res.txt"
        events = tmp_path / "events.txt"
        write_results([self.result(outputs)], path, events_path=events)
        assert path.read_text() == "1,1,10.000000,20.000000,30.000000,40.000000,0.900000,-1,-1,-1\n"
        assert events.read_text() == "1,1,1\n"

    def test_empty_output(self, tmp_path):
        path = tmp_path / "res.txt"
        write_results([], path)
        assert path.read_text() == ""


class TestGtAndDetectionFiles:
    def test_gt_roundtrip(self, tmp_path):
        spec = SequenceSpec(n_frames=6, n_identities=2, embedding_dim=4,
                            image_w=200, image_h=200)
        dets, gts = synth_generate(spec, seed=0)
        gt_path = tmp_path / "gt.txt"
        write_gt(gts, gt_path)
        first, loaded = load_gt(gt_path)
        assert first == 1 and len(loaded) == 6
        for orig_frame, loaded_frame in zip(gts, loaded):
            assert [o.id for o in loaded_frame] == [o.id for o in orig_frame]
            for a, b in zip(orig_frame, loaded_frame):
                assert b.box.x_left == pytest.approx(a.box.x_left, abs=1e-4)
                assert b.visibility == pytest.approx(a.visibility, abs=1e-4)

    def test_detection_roundtrip_with_embeddings(self, tmp_path):
        spec = SequenceSpec(n_frames=4, n_identities=2, embedding_dim=4,
                            image_w=200, image_h=200)
        dets, _ = synth_generate(spec, seed=1)
        det_path, emb_path = tmp_path / "det.txt", tmp_path / "emb.txt"
        write_detections(dets, det_path, emb_path)
        first, loaded = load_mot(det_path, emb_path)
        assert len(loaded) == 4
        for orig_frame, loaded_frame in zip(dets, loaded):
            for a, b in zip(orig_frame, loaded_frame):
                assert b.score == pytest.approx(a.score, abs=1e-4)
                assert np.allclose(a.embedding, b.embedding, atol=1e-5)


class TestConfigFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\nK=50\n\ntau_E = 0.35\n")
        assert load_config_file(path) == {"K": "50", "tau_E": "0.35"}

    def test_bad_line(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("K: 50\n")
        with pytest.raises(DataFormatError, match=":1"):
            load_config_file(path)


class TestAlignFrames:
    def test_pads_to_common_range(self):
        a = [["a1"], ["a2"]]
        b = [["b3"]]
        out_a, out_b = align_frames(1, a, 3, b)
        assert out_a == [["a1"], ["a2"], []]
        assert out_b == [[], [], ["b3"]]

    def test_empty(self):
        assert align_frames(1, [], 1, []) == ([], [])
