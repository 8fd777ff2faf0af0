import hashlib
import os
import random

import pytest

from histeval.corpus import attach_sidecar, ingest_corpus
from histeval.errors import CorpusError, SidecarError
from histeval.manifest import Manifest, build_manifest

from conftest import colorful_pixels, tiny_manifest, write_jsonl, write_png


@pytest.fixture
def manifest():
    return tiny_manifest()


class TestIngestLayout:
    def test_mini_fixture_matches_file_walk(self, mini_corpus_dir, manifest):
        corpus = ingest_corpus(mini_corpus_dir, manifest)
        # independent oracle: recursive directory listing
        walked = []
        for dirpath, _, filenames in os.walk(mini_corpus_dir):
            walked += [os.path.join(dirpath, f) for f in filenames if f.endswith(".png")]
        assert len(corpus) == len(walked) == 60
        assert sorted(r.path for r in corpus.records) == sorted(walked)
        counts = corpus.counts()
        assert counts == {
            "sdxl": {"18th-century": 20, "1950s": 20, "21st-century": 20}
        }

    def test_replicate_sum_equals_total(self, mini_corpus_dir, manifest):
        corpus = ingest_corpus(mini_corpus_dir, manifest)
        by_pair = {}
        for r in corpus.records:
            by_pair.setdefault((r.activity, r.period), 0)
            by_pair[(r.activity, r.period)] += 1
        assert sum(by_pair.values()) == len(corpus)

    def test_empty_corpus(self, tmp_path):
        empty_manifest = Manifest.from_dict({"categories": [], "periods": []})
        root = tmp_path / "empty"
        root.mkdir()
        corpus = ingest_corpus(root, empty_manifest)
        assert len(corpus) == 0

    def test_unknown_period_directory(self, tmp_path, manifest):
        root = tmp_path / "corpus"
        write_png(root / "sdxl" / "22nd-century" / "singing" / "0.png", colorful_pixels(1))
        with pytest.raises(CorpusError, match="unknown period"):
            ingest_corpus(root, manifest)

    def test_unknown_activity_directory(self, tmp_path, manifest):
        root = tmp_path / "corpus"
        write_png(root / "sdxl" / "1950s" / "surfing" / "0.png", colorful_pixels(1))
        with pytest.raises(CorpusError, match="unknown activity"):
            ingest_corpus(root, manifest)

    def test_non_numeric_replicate(self, tmp_path, manifest):
        root = tmp_path / "corpus"
        write_png(root / "sdxl" / "1950s" / "singing" / "cover.png", colorful_pixels(1))
        with pytest.raises(CorpusError, match="replicate"):
            ingest_corpus(root, manifest)

    def test_digests_recorded(self, mini_corpus_dir, manifest):
        corpus = ingest_corpus(mini_corpus_dir, manifest)
        record = corpus.records[0]
        expected = hashlib.sha256(open(record.path, "rb").read()).hexdigest()
        assert record.sha256 == expected


class TestIngestIndex:
    def _index_rows(self, root, manifest, with_digest=False):
        rows = []
        corpus = ingest_corpus(root, manifest)
        for r in corpus.records:
            row = {
                "image_id": r.image_id,
                "model_id": r.model_id,
                "activity": r.activity,
                "period": r.period,
                "replicate": r.replicate,
                "path": os.path.relpath(r.path, root),
            }
            if with_digest:
                row["sha256"] = r.sha256
            rows.append(row)
        return rows

    def test_index_roundtrip_and_order_independence(self, mini_corpus_dir, manifest, tmp_path):
        rows = self._index_rows(mini_corpus_dir, manifest, with_digest=True)
        shuffled = rows[:]
        random.Random(7).shuffle(shuffled)
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        write_jsonl(a, rows)
        write_jsonl(b, shuffled)
        corpus_a = ingest_corpus(mini_corpus_dir, manifest, index=a)
        corpus_b = ingest_corpus(mini_corpus_dir, manifest, index=b)
        assert corpus_a.records == corpus_b.records

    def test_digest_mismatch_rejected(self, mini_corpus_dir, manifest, tmp_path):
        rows = self._index_rows(mini_corpus_dir, manifest, with_digest=True)
        rows[0]["sha256"] = "0" * 64
        index = tmp_path / "bad.jsonl"
        write_jsonl(index, rows)
        with pytest.raises(CorpusError, match="digest mismatch"):
            ingest_corpus(mini_corpus_dir, manifest, index=index)

    def test_duplicate_key_rejected(self, mini_corpus_dir, manifest, tmp_path):
        rows = self._index_rows(mini_corpus_dir, manifest)
        dup = dict(rows[0])
        dup["image_id"] = "other-id"
        rows.append(dup)
        index = tmp_path / "dup.jsonl"
        write_jsonl(index, rows)
        with pytest.raises(CorpusError, match="duplicate record key"):
            ingest_corpus(mini_corpus_dir, manifest, index=index)

    def test_missing_file_rejected(self, mini_corpus_dir, manifest, tmp_path):
        rows = self._index_rows(mini_corpus_dir, manifest)
        rows[0]["path"] = "sdxl/nowhere.png"
        index = tmp_path / "missing.jsonl"
        write_jsonl(index, rows)
        with pytest.raises(CorpusError, match="missing image file"):
            ingest_corpus(mini_corpus_dir, manifest, index=index)

    def test_full_grid_corpus_counts(self, tmp_path):
        # Full-scale layout: 3 models x 100 activities x 10 periods x 10
        # replicates = 30,000 records, N_t^m = 1000 per (model, period).
        # One shared zero-byte payload keeps the oracle (the index row count)
        # independent of the ingest path while staying cheap.
        bundled = build_manifest()
        root = tmp_path / "full"
        root.mkdir()
        payload = root / "blank.png"
        payload.write_bytes(b"")
        rows = []
        for model in ("sdxl", "sd3", "flux1"):
            for a in bundled.activities:
                for p in bundled.periods:
                    for replicate in range(10):
                        rows.append(
                            {
                                "image_id": f"{model}/{p.id}/{a.id}/{replicate}",
                                "model_id": model,
                                "activity": a.id,
                                "period": p.id,
                                "replicate": replicate,
                                "path": "blank.png",
                            }
                        )
        assert len(rows) == 30000
        index = tmp_path / "index.jsonl"
        write_jsonl(index, rows)
        corpus = ingest_corpus(root, bundled, index=index)
        assert len(corpus) == 30000
        counts = corpus.counts()
        assert set(counts) == {"sdxl", "sd3", "flux1"}
        for model in counts:
            assert set(counts[model].values()) == {1000}


class TestSidecars:
    @pytest.fixture
    def corpus(self, mini_corpus_dir, manifest):
        return ingest_corpus(mini_corpus_dir, manifest)

    def test_styles_full_cover(self, corpus, tmp_path):
        rows = [{"image_id": r.image_id, "label": "painting"} for r in corpus.records]
        path = tmp_path / "styles.jsonl"
        write_jsonl(path, rows)
        attached = attach_sidecar(corpus, "styles", path)
        assert len(attached.styles) == 60
        assert all(obs.label == "painting" for obs in attached.styles.values())
        assert corpus.styles is None  # original untouched

    def test_orphan_row_names_id_and_line(self, corpus, tmp_path):
        rows = [
            {"image_id": corpus.records[0].image_id, "label": "painting"},
            {"image_id": "ghost/1950s/singing/0", "label": "painting"},
        ]
        path = tmp_path / "styles.jsonl"
        write_jsonl(path, rows)
        with pytest.raises(SidecarError, match=r"styles\.jsonl:2.*ghost/1950s/singing/0"):
            attach_sidecar(corpus, "styles", path)

    def test_malformed_row_names_line(self, corpus, tmp_path):
        path = tmp_path / "styles.jsonl"
        path.write_text('{"image_id": "x", "label": "painting"}\nnot json\n')
        with pytest.raises(SidecarError, match=":1"):
            attach_sidecar(corpus, "styles", path)

    def test_reattach_replaces_wholesale(self, corpus, tmp_path):
        first = tmp_path / "faces1.jsonl"
        second = tmp_path / "faces2.jsonl"
        image_id = corpus.records[0].image_id
        write_jsonl(
            first,
            [
                {
                    "image_id": image_id,
                    "faces": [
                        {"gender": "male", "race": "White", "conf_gender": 0.9, "conf_race": 0.9}
                    ],
                }
            ],
        )
        write_jsonl(
            second,
            [
                {
                    "image_id": image_id,
                    "faces": [
                        {
                            "gender": "female",
                            "race": "Black",
                            "conf_gender": 0.8,
                            "conf_race": 0.8,
                        }
                    ],
                },
                {"image_id": corpus.records[1].image_id, "faces": []},
            ],
        )
        once = attach_sidecar(corpus, "faces", first)
        twice = attach_sidecar(once, "faces", second)
        assert once.faces[image_id][0].gender == "male"
        assert twice.faces[image_id][0].gender == "female"
        assert len(twice.faces) == 2

    def test_embedding_dimension_enforced(self, corpus, tmp_path):
        path = tmp_path / "emb.jsonl"
        write_jsonl(
            path,
            [
                {"image_id": corpus.records[0].image_id, "vector": [1.0, 2.0]},
                {"image_id": corpus.records[1].image_id, "vector": [1.0, 2.0, 3.0]},
            ],
        )
        with pytest.raises(SidecarError, match="dimension"):
            attach_sidecar(corpus, "embeddings", path)

    def test_annotation_answer_validated(self, corpus, tmp_path):
        path = tmp_path / "ann.jsonl"
        write_jsonl(
            path,
            [
                {
                    "image_id": corpus.records[0].image_id,
                    "question_id": "q",
                    "annotator_id": "a1",
                    "answer": "maybe",
                }
            ],
        )
        with pytest.raises(SidecarError, match="yes"):
            attach_sidecar(corpus, "annotations", path)

    def test_unknown_kind_rejected(self, corpus, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text("{}\n")
        with pytest.raises(SidecarError, match="unknown sidecar kind"):
            attach_sidecar(corpus, "captions", path)


def test_ingest_deterministic_across_calls(mini_corpus_dir):
    manifest = tiny_manifest()
    a = ingest_corpus(mini_corpus_dir, manifest)
    b = ingest_corpus(mini_corpus_dir, manifest)
    assert a.records == b.records
