import numpy as np
import pytest

from fewbank.banks import load_bank, load_manifest
from fewbank.cli import main


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "complementary"
    assert main(["synth-fixture", "--kind", "complementary", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def manifest_path(fixture_dir):
    return str(fixture_dir / "manifest.json")


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSynthFixture:
    def test_writes_complete_dataset(self, fixture_dir):
        names = {p.name for p in fixture_dir.iterdir()}
        assert names == {
            "manifest.json", "clip_support.mkeb", "dino_support.mkeb",
            "clip_query.mkeb", "dino_query.mkeb", "text_head.mkeb",
            "clip_candidates.mkeb", "dino_candidates.mkeb",
            "candidate_scores.mksc",
        }
        manifest = load_manifest(fixture_dir / "manifest.json")
        assert manifest.n_classes == 3
        bank = load_bank(fixture_dir / "clip_support.mkeb")
        assert bank.rows == 3 * manifest.shots

    def test_gaussian_kind(self, tmp_path):
        out = tmp_path / "g"
        assert main(["synth-fixture", "--kind", "gaussian", "--out", str(out)]) == 0
        assert load_manifest(out / "manifest.json").n_classes == 10

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth-fixture", "--out", str(a)])
        main(["synth-fixture", "--out", str(b)])
        for name in ("clip_support.mkeb", "candidate_scores.mksc", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestBuildTrainEval:
    def test_eval_fresh_build(self, capsys, manifest_path):
        code, out, _ = run(capsys, ["eval", "--manifest", manifest_path])
        assert code == 0
        fields = out.strip().split("\t")
        assert len(fields) == 4 and fields[3] == "120"

    def test_epochs_zero_checkpoint_matches_fresh_build(self, capsys, tmp_path,
                                                        manifest_path):
        out_dir = tmp_path / "t0"
        code = main(["train", "--manifest", manifest_path, "--epochs", "0",
                     "--out", str(out_dir)])
        assert code == 0
        assert (out_dir / "loss_trace.tsv").read_text() == ""
        code, from_ckpt, _ = run(capsys, ["eval", "--manifest", manifest_path,
                                          "--checkpoint", str(out_dir / "cache.mkcp")])
        assert code == 0
        code, fresh, _ = run(capsys, ["eval", "--manifest", manifest_path])
        assert code == 0
        assert from_ckpt == fresh

    def test_build_writes_checkpoint(self, capsys, tmp_path, manifest_path):
        out_dir = tmp_path / "b"
        assert main(["build", "--manifest", manifest_path, "--out", str(out_dir)]) == 0
        assert (out_dir / "cache.mkcp").exists()

    def test_train_deterministic_artifacts(self, tmp_path, manifest_path):
        dirs = [tmp_path / "r1", tmp_path / "r2"]
        for d in dirs:
            code = main(["train", "--manifest", manifest_path, "--epochs", "3",
                         "--seed", "5", "--out", str(d)])
            assert code == 0
        assert (dirs[0] / "cache.mkcp").read_bytes() == (dirs[1] / "cache.mkcp").read_bytes()
        assert (dirs[0] / "loss_trace.tsv").read_bytes() == (dirs[1] / "loss_trace.tsv").read_bytes()

    def test_train_gradient_flags_wired(self, tmp_path, manifest_path):
        out_a, out_b = tmp_path / "full", tmp_path / "ablated"
        base = ["train", "--manifest", manifest_path, "--epochs", "2",
                "--seed", "1"]
        assert main(base + ["--out", str(out_a)]) == 0
        assert main(base + ["--detach-weights", "--loss-branch",
                            "--out", str(out_b)]) == 0
        assert (out_a / "cache.mkcp").read_bytes() != (out_b / "cache.mkcp").read_bytes()

    def test_train_writes_trace_rows(self, tmp_path, manifest_path):
        out_dir = tmp_path / "t"
        main(["train", "--manifest", manifest_path, "--epochs", "4",
              "--out", str(out_dir)])
        lines = (out_dir / "loss_trace.tsv").read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("1\t")

    def test_expand_writes_merged_banks(self, tmp_path, manifest_path):
        out_dir = tmp_path / "x"
        code = main(["expand", "--manifest", manifest_path, "--synthetic-k", "4",
                     "--out", str(out_dir)])
        assert code == 0
        merged = load_bank(out_dir / "clip_support.mkeb")
        assert merged.rows == 3 * (8 + 4)
        assert np.array_equal(np.bincount(merged.labels), [12, 12, 12])
        expanded = load_manifest(out_dir / "manifest.json")
        assert expanded.shots == 12

    def test_expanded_manifest_is_evaluable(self, capsys, tmp_path, manifest_path):
        # query/text-head paths in the new manifest must resolve from its
        # own directory
        out_dir = tmp_path / "x2"
        assert main(["expand", "--manifest", manifest_path, "--synthetic-k", "2",
                     "--out", str(out_dir)]) == 0
        code, out, _ = run(capsys, ["eval", "--manifest",
                                    str(out_dir / "manifest.json")])
        assert code == 0
        assert out.strip().split("\t")[3] == "120"

    def test_zero_shot_build(self, capsys, tmp_path, manifest_path):
        out_dir = tmp_path / "z"
        code = main(["build", "--manifest", manifest_path, "--shots", "0",
                     "--synthetic-k", "8", "--out", str(out_dir)])
        assert code == 0
        code, out, _ = run(capsys, ["eval", "--manifest", manifest_path,
                                    "--checkpoint", str(out_dir / "cache.mkcp")])
        assert code == 0
        assert float(out.split("\t")[0]) > 1.0 / 3.0


class TestSweepAblate:
    def test_beta_grid_rows(self, capsys, manifest_path):
        code, out, _ = run(capsys, ["sweep", "--manifest", manifest_path,
                                    "--beta-grid"])
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 6
        assert [line.split("\t")[0] for line in lines] == \
            ["0.4", "0.5", "0.6", "0.7", "0.8", "1"]

    def test_kprime_grid_rows(self, capsys, manifest_path):
        code, out, _ = run(capsys, ["sweep", "--manifest", manifest_path,
                                    "--kprime-grid"])
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 5
        assert [line.split("\t")[1] for line in lines] == ["1", "2", "4", "8", "16"]

    def test_joint_grid_rows(self, capsys, manifest_path):
        code, out, _ = run(capsys, ["sweep", "--manifest", manifest_path,
                                    "--beta-grid", "--kprime-grid"])
        assert code == 0
        assert len(out.strip().splitlines()) == 30

    def test_sweep_without_grid_is_usage_error(self, capsys, manifest_path):
        code, _, err = run(capsys, ["sweep", "--manifest", manifest_path])
        assert code == 1

    def test_ablate_emits_seven_rows(self, capsys, manifest_path):
        code, out, _ = run(capsys, ["ablate", "--manifest", manifest_path])
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 7
        modes = [line.split("\t")[0] for line in lines]
        assert modes[0] == "adaptive_zs_base" and "maximum" in modes


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_no_command(self, capsys):
        assert main([]) == 1

    def test_missing_manifest_flag(self, capsys):
        assert main(["eval"]) == 1

    def test_missing_manifest_file(self, capsys):
        assert main(["eval", "--manifest", "/nonexistent/m.json"]) == 2

    def test_corrupt_bank(self, capsys, tmp_path, manifest_path):
        import json, shutil
        src = load_manifest(manifest_path)
        broken = tmp_path / "broken"
        shutil.copytree(src.root, broken)
        (broken / "clip_query.mkeb").write_bytes(b"JUNKJUNKJUNK")
        assert main(["eval", "--manifest", str(broken / "manifest.json")]) == 2

    def test_insufficient_shots(self, capsys, manifest_path):
        assert main(["build", "--manifest", manifest_path, "--shots", "99",
                     "--out", "/tmp/nope"]) == 2

    def test_nothing_to_cache(self, capsys, manifest_path):
        assert main(["build", "--manifest", manifest_path, "--shots", "0",
                     "--out", "/tmp/nope"]) == 2

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
