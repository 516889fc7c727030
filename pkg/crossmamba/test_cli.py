import json
import os

from .cli import main
from .instances import SMOKE_DIMS


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def gen_args(out):
    return [
        "--seed",
        "42",
        "--out",
        out,
        "gen-scene",
        "--cameras",
        "3",
        "--fov",
        "120",
        "--bev",
        "4",
        "4",
        "--level",
        "3x4x8",
    ]


class TestCli:
    def test_gen_scene_and_run(self, tmpdir, capsys):
        scene = os.path.join(tmpdir, "scene")
        assert main(gen_args(scene)) == 0
        listing = json.loads(capsys.readouterr().out)
        assert listing["scene_dir"] == scene
        assert "cam2_level0.xbev" in listing["sha256"]

        config = os.path.join(tmpdir, "config.json")
        with open(config, "w") as f:
            json.dump({"layer": {"dims": SMOKE_DIMS}}, f)
        out = os.path.join(tmpdir, "run")
        assert main(["--config", config, "--out", out, "run", scene]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["output_shape"] == [4, 4, 8]
        assert os.path.isfile(os.path.join(out, "summary.json"))

    def test_gen_scene_is_deterministic(self, tmpdir, capsys):
        main(gen_args(os.path.join(tmpdir, "a")))
        first = json.loads(capsys.readouterr().out)["sha256"]
        main(gen_args(os.path.join(tmpdir, "b")))
        assert json.loads(capsys.readouterr().out)["sha256"] == first

    def test_flops_csv(self, tmpdir):
        out = os.path.join(tmpdir, "flops.csv")
        assert main(["--format", "csv", "--out", out, "flops"]) == 0
        with open(out) as f:
            lines = f.read().splitlines()
        assert lines[0] == "module,Q,V,params,flops,est_memory_bytes"
        assert len(lines) == 1 + 3 * 4

    def test_flops_single_config(self, capsys):
        assert main(["flops", "--bev", "100", "100", "--image", "1280", "720"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report[0]["config"]["Q"] == 10000

    def test_bench_json(self, capsys):
        assert main(["bench", "--sizes", "16", "32", "--queries", "4"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert [row["V"] for row in rows] == [16, 32]

    def test_usage_error(self, capsys):
        assert main(["verify", "--level", "slow"]) == 2
        error = last_error(capsys)
        assert error["error"] == "UsageError"

    def test_missing_command(self, capsys):
        assert main([]) == 2

    def test_missing_scene(self, tmpdir, capsys):
        code = main(["--out", str(tmpdir), "run", os.path.join(tmpdir, "absent")])
        assert code == 3
        assert last_error(capsys)["error"] == "SceneIOError"

    def test_config_error(self, tmpdir, capsys):
        scene = os.path.join(tmpdir, "scene")
        main(gen_args(scene))
        config = os.path.join(tmpdir, "config.json")
        with open(config, "w") as f:
            json.dump({"layer": {"insertion": "append"}}, f)
        assert main(["--config", config, "run", scene]) == 2
        error = last_error(capsys)
        assert error["error"] == "ConfigError"
        assert "layer.insertion" in error["message"]

    def test_negative_seed(self, tmpdir, capsys):
        scene = os.path.join(tmpdir, "scene")
        assert main(["--seed", "-1", "--out", scene, "gen-scene"]) == 2
        error = last_error(capsys)
        assert error["error"] == "ConfigError"
        assert "'seed'" in error["message"]
        assert not os.path.exists(scene)

    def test_empty_bev_grid(self, tmpdir, capsys):
        scene = os.path.join(tmpdir, "scene")
        assert main(["--out", scene, "gen-scene", "--bev", "0", "0"]) == 2
        error = last_error(capsys)
        assert error["error"] == "ConfigError"
        assert "bev.H_bev" in error["message"]

    def test_flops_empty_bev_grid(self, capsys):
        assert main(["flops", "--bev", "0", "50"]) == 2
        error = last_error(capsys)
        assert error["error"] == "ConfigError"
        assert "H_bev" in error["message"]

    def test_flops_zero_stride(self, capsys):
        assert main(["flops", "--stride", "0"]) == 2
        assert last_error(capsys)["error"] == "ConfigError"

    def test_bench_without_feature_tokens(self, capsys):
        assert main(["bench", "--sizes", "0", "--queries", "3"]) == 0
        (row,) = json.loads(capsys.readouterr().out)
        assert row["V"] == 0

    def test_bench_negative_size(self, capsys):
        assert main(["bench", "--sizes", "-4"]) == 2
        assert last_error(capsys)["error"] == "UsageError"
