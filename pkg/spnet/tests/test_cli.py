# tests/test_cli.py
import json
import os

import pytest
from typer.testing import CliRunner

from spnet.cli import pipeline
from spnet.cli.main import app
from spnet.nn.checkpoint import load_checkpoint
from spnet.retrieval.ranking import descriptor
from spnet.retrieval.similarity import block_means, similarity_matrix
from spnet.state_management import RUN_SNAPSHOT_FILE, Split
from spnet.utils.cache_manager import view_cache
from spnet.utils.dataset import ViewArchive, load_manifest

runner = CliRunner()

TINY_CONFIG = """\
image_size=16
n_views=4
top_m=2
selection_epochs=2
train.epochs=2
train.batch_size=4
train.hidden_units=32
"""

STAGES = ["render", "train", "select", "ensemble", "eval", "retrieve"]


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def run_pipeline(manifest, config, out):
    for stage in STAGES:
        result = invoke(stage, "--manifest", manifest, "--config", config, "--out", out)
        assert result.exit_code == 0, f"{stage}: {result.output}"


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    result = invoke("synth", "--out", root, "--count", 12, "--classes", 2, "--seed", 3, "--test-fraction", 0.25)
    assert result.exit_code == 0, result.output
    config = root / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    return root / "manifest.csv", config


class TestSynthCommand:
    """Test suite for the synthetic corpus command"""

    def test_manifest_contents(self, corpus):
        """Test objects split evenly over classes with a quarter held out"""
        manifest = load_manifest(corpus[0])
        assert len(manifest.records) == 12
        assert manifest.classes == ["box", "icosphere"]
        for label in manifest.classes:
            records = [r for r in manifest.records if r.class_label == label]
            assert len(records) == 6
            assert sum(r.split.value == "test" for r in records) == 2

    def test_same_seed_same_files(self, corpus, tmp_path):
        """Test synthesis is reproducible"""
        result = invoke("synth", "--out", tmp_path, "--count", 12, "--classes", 2, "--seed", 3, "--test-fraction", 0.25)
        assert result.exit_code == 0
        assert (tmp_path / "manifest.csv").read_text() == corpus[0].read_text()
        first = load_manifest(corpus[0]).records[0]
        mirrored = tmp_path / first.mesh_path.relative_to(corpus[0].parent.resolve())
        assert mirrored.read_text() == first.mesh_path.read_text()

    def test_too_many_classes(self, tmp_path):
        """Test the class count is bounded by the available shapes"""
        assert invoke("synth", "--out", tmp_path, "--classes", 9).exit_code == 2


class TestPipelineCommands:
    """Test suite for the staged pipeline"""

    def setup_method(self):
        """Start every test from an empty view cache"""
        view_cache.clear()

    def test_full_pipeline_is_reproducible(self, corpus, tmp_path):
        """Test every stage succeeds and two runs write identical artifacts"""
        manifest, config = corpus
        first, second = tmp_path / "first", tmp_path / "second"
        run_pipeline(manifest, config, first)
        run_pipeline(manifest, config, second)

        for name in (pipeline.BACKBONE_FILE, pipeline.SELECTION_FILE, pipeline.ENSEMBLE_FILE,
                     pipeline.METRICS_FILE, pipeline.RANKINGS_FILE, pipeline.RETRIEVAL_METRICS_FILE):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

        assert len(list((first / "views").glob("*/view*.spdi"))) == 12 * 4
        assert (first / "similarity.png").exists()
        report = json.loads((first / pipeline.METRICS_FILE).read_text())
        assert 0.0 <= report["single_view"]["accuracy"] <= 1.0
        assert len(report["selected_views"]) == 2
        retrieval = json.loads((first / pipeline.RETRIEVAL_METRICS_FILE).read_text())
        assert retrieval["num_queries"] == 4

    def test_render_is_resumable(self, corpus, tmp_path):
        """Test a second render skips views already on disk"""
        manifest, config = corpus
        invoke("render", "--manifest", manifest, "--config", config, "--out", tmp_path)
        result = invoke("render", "--manifest", manifest, "--config", config, "--out", tmp_path)
        assert result.exit_code == 0
        assert "rendered 0, skipped 48" in result.output

    def test_corrupt_mesh_is_reported(self, corpus, tmp_path):
        """Test a malformed mesh fails its object without stopping the others"""
        manifest, config = corpus
        lines = manifest.read_text().splitlines()
        broken = tmp_path / "broken.off"
        broken.write_text("OFF\n3 1 0\n0 0 0\n")
        lines.append(f"broken,{broken},box,train")
        local = tmp_path / "manifest.csv"
        local.write_text("\n".join(lines).replace(",meshes/", f",{manifest.parent}/meshes/") + "\n")

        result = invoke("render", "--manifest", local, "--config", config, "--out", tmp_path / "run")
        assert result.exit_code == 1
        errors = (tmp_path / "run" / pipeline.RENDER_ERRORS_FILE).read_text().splitlines()
        assert [json.loads(e)["object_id"] for e in errors] == ["broken"]
        assert (tmp_path / "run" / "views" / lines[1].split(",")[0] / "view00.spdi").exists()

    def test_stage_order_is_enforced(self, corpus, tmp_path):
        """Test stages whose inputs are missing exit with status 2"""
        manifest, config = corpus
        assert invoke("train", "--manifest", manifest, "--config", config, "--out", tmp_path).exit_code == 2
        assert invoke("select", "--manifest", manifest, "--config", config, "--out", tmp_path).exit_code == 2
        assert invoke("retrieve", "--manifest", manifest, "--config", config, "--out", tmp_path).exit_code == 2

    def test_invalid_image_size(self, corpus, tmp_path):
        """Test image sizes not divisible by 8 are configuration errors"""
        manifest, config = corpus
        result = invoke("render", "--manifest", manifest, "--config", config, "--out", tmp_path, "--image-size", 12)
        assert result.exit_code == 2

    def test_missing_manifest(self, tmp_path):
        """Test a nonexistent manifest exits with status 2"""
        assert invoke("render", "--manifest", tmp_path / "absent.csv", "--out", tmp_path).exit_code == 2

    def test_empty_test_split(self, tmp_path):
        """Test training stages run without held-out objects and evaluation refuses to"""
        data, run = tmp_path / "data", tmp_path / "run"
        assert invoke("synth", "--out", data, "--count", 8, "--classes", 2, "--test-fraction", 0).exit_code == 0
        config = tmp_path / "tiny.cfg"
        config.write_text(TINY_CONFIG)
        manifest = data / "manifest.csv"

        for stage in ("render", "train", "select", "ensemble"):
            result = invoke(stage, "--manifest", manifest, "--config", config, "--out", run)
            assert result.exit_code == 0, f"{stage}: {result.output}"
        splits = {json.loads(line)["split"] for line in (run / "train_log.jsonl").read_text().splitlines()}
        assert splits == {"train"}

        assert invoke("eval", "--manifest", manifest, "--config", config, "--out", run).exit_code == 2
        assert invoke("retrieve", "--manifest", manifest, "--config", config, "--out", run).exit_code == 2

    def test_settings_carry_between_stages(self, corpus, tmp_path):
        """Test flags given to an earlier stage apply to later stages of the same run"""
        manifest, config = corpus
        result = invoke("render", "--manifest", manifest, "--config", config, "--out", tmp_path, "--projection", "cassini")
        assert result.exit_code == 0, result.output
        assert invoke("train", "--manifest", manifest, "--config", config, "--out", tmp_path).exit_code == 0
        assert "projection: cassini" in (tmp_path / RUN_SNAPSHOT_FILE).read_text()

        assert invoke("eval", "--manifest", manifest, "--config", config, "--out", tmp_path).exit_code == 0
        assert json.loads((tmp_path / pipeline.METRICS_FILE).read_text())["projection"] == "cassini"

        result = invoke("eval", "--manifest", manifest, "--config", config, "--out", tmp_path, "--projection", "cassini")
        assert result.exit_code == 0, result.output
        assert "cassini" in result.output


class TestGradcheckCommand:
    """Test suite for the gradient check command"""

    def test_small_check_passes(self):
        """Test a reduced gradient check succeeds"""
        result = invoke("gradcheck", "--classes", 3, "--samples", 20)
        assert result.exit_code == 0, result.output
        assert "passed" in result.output

    @pytest.mark.skipif(not os.getenv("SPNET_SLOW_TESTS"), reason="set SPNET_SLOW_TESTS=1 to run")
    def test_default_check_passes(self):
        """Test the full 200-sample check on a 10-class model"""
        assert invoke("gradcheck").exit_code == 0


DESK_CONFIG = """\
image_size=32
n_views=16
top_m=5
selection_epochs=20
train.epochs=200
"""


@pytest.mark.skipif(not os.getenv("SPNET_SLOW_TESTS"), reason="set SPNET_SLOW_TESTS=1 to run")
class TestDeskScaleLearning:
    """Test suite for a five-class corpus trained end to end"""

    def test_classification_and_retrieval(self, tmp_path):
        """Test accuracy, ensemble gain and class separation of the descriptors"""
        view_cache.clear()
        data, run = tmp_path / "data", tmp_path / "run"
        result = invoke("synth", "--out", data, "--count", 400, "--classes", 5, "--seed", 0, "--test-fraction", 0.25)
        assert result.exit_code == 0, result.output
        config = tmp_path / "desk.cfg"
        config.write_text(DESK_CONFIG)
        manifest = data / "manifest.csv"
        records = load_manifest(manifest).split(Split.TEST)
        assert len(records) == 5 * 20

        for stage in ("render", "train", "select"):
            result = invoke(stage, "--manifest", manifest, "--config", config, "--out", run)
            assert result.exit_code == 0, f"{stage}: {result.output}"
        result = invoke("ensemble", "--manifest", manifest, "--config", config, "--out", run, "--epochs", 50)
        assert result.exit_code == 0, result.output
        assert invoke("eval", "--manifest", manifest, "--config", config, "--out", run).exit_code == 0

        report = json.loads((run / pipeline.METRICS_FILE).read_text())
        assert report["projection"] == "uv"
        assert report["single_view"]["accuracy"] >= 0.9
        assert report["ensemble"]["accuracy"] >= report["single_view"]["accuracy"]
        assert len(set(report["selected_views"])) == 5

        ensemble = load_checkpoint(run / pipeline.ENSEMBLE_FILE).ensemble
        archive = ViewArchive(run, [r.object_id for r in records], ensemble.view_indices, image_size=32)
        descriptors = [descriptor(ensemble, archive[i], r.object_id, r.class_label) for i, r in enumerate(records)]
        within, between = block_means(similarity_matrix(descriptors))
        assert within < between
