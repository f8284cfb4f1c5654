import json
from pathlib import Path

import numpy as np
import pytest

from lwplg.cli import main, parse_size
from lwplg.imageio import write_image

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("argv,golden", [
    (("describe", "--variant", "A"), "describe_A.txt"),
    (("params", "--variant", "micro", "--classes", "3", "--json"), "params_micro.json"),
    (("params", "--variant", "R", "--classes", "1000", "--csv"), "params_R.csv"),
    (("sweep", "--variant", "R", "--sizes", "224,448,896"), "sweep_R.csv"),
])
def test_golden_outputs(capsys, argv, golden):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out == (GOLDEN / golden).read_text()


def test_describe_rows(capsys):
    _, out, _ = run(capsys, "describe", "--variant", "A")
    assert "stage 3: blocks=12, C=128, lsa 7/2, gsa 14/2, r=1/2, head_dim=32" in out
    _, out, _ = run(capsys, "describe", "--variant", "R")
    assert "stage 1: blocks=1, C=48, lsa 7/1, gsa: absent, r=1, head_dim=48" in out


def test_invalid_variant_is_usage_error(capsys):
    code, _, err = run(capsys, "describe", "--variant", "Q")
    assert code == 2 and "usage" in err


@pytest.mark.parametrize("argv", [("flops", "--variant", "A", "--size", "abc"),
                                  ("flops", "--variant", "A", "--size", "16"),
                                  ("sweep", "--variant", "A", "--sizes", "224,x"),
                                  ("params", "--variant", "A", "--classes", "0"),
                                  ()])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_params_json_schema(capsys):
    _, out, _ = run(capsys, "params", "--variant", "A", "--json")
    d = json.loads(out)
    assert set(d) == {"total", "groups", "rows"}
    assert set(d["rows"][0]) == {"name", "shape", "count"}
    assert d["total"] == sum(d["groups"].values())


def test_flops_report(capsys):
    code, out, _ = run(capsys, "flops", "--variant", "R", "--size", "224")
    assert code == 0 and "total" in out and "1 MAC = 1 FLOP" in out
    _, out, _ = run(capsys, "flops", "--variant", "A", "--size", "256x192", "--json")
    assert json.loads(out)["total_macs"] > 0


def test_sweep_to_file(capsys, tmp_path):
    out = tmp_path / "s.csv"
    assert run(capsys, "sweep", "--variant", "A", "--sizes", "224,448,896", "--out", str(out))[0] == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4 and len({ln.split(",")[3] for ln in lines[1:]}) == 1


def test_gradcheck_pass_and_self_test(capsys):
    code, out, _ = run(capsys, "gradcheck", "--scope", "op")
    assert code == 0 and out.count("PASS") >= 12 and "max_rel_err" in out
    code, out, _ = run(capsys, "gradcheck", "--scope", "op", "--perturb", "0.01")
    assert code == 1 and "FAIL" in out


def test_parse_size():
    assert parse_size("224") == (224, 224)
    assert parse_size("256x192") == (256, 192)


@pytest.fixture
def gray(tmp_path):
    path = tmp_path / "gray.ppm"
    write_image(path, np.full((40, 48, 3), 128, np.uint8))
    return path


def _scores(out):
    return [float(line.split("score=")[1]) for line in out.splitlines()]


def test_infer_fresh_model(capsys, gray):
    code, out, _ = run(capsys, "infer", "--image", str(gray), "--size", "32", "--variant", "micro", "--classes", "10")
    assert code == 0
    scores = _scores(out)
    assert len(scores) == 5 and sum(scores) <= 1.0 + 1e-6
    assert scores == sorted(scores, reverse=True)
    assert run(capsys, "infer", "--image", str(gray), "--size", "32", "--variant", "micro", "--classes", "10")[1] == out


def test_train_save_then_infer_reproduces(capsys, tmp_path, gray):
    weights = tmp_path / "w.lwpv"
    code, out, _ = run(capsys, "train-toy", "--steps", "3", "--seed", "1", "--out", str(weights))
    assert code == 0 and "train accuracy" in out
    assert (tmp_path / "w.lwpv.config.json").exists()
    code, a, _ = run(capsys, "infer", "--weights", str(weights), "--image", str(gray), "--size", "32")
    assert code == 0 and len(a.splitlines()) == 3  # 3 classes, top-5 truncated
    from lwplg.config import load_config
    from lwplg.model import LWPLGViT
    from lwplg.weights import load_weights
    net = LWPLGViT(load_config(tmp_path / "w.lwpv.config.json"))
    net.load_state(load_weights(weights))
    from lwplg import ops
    from lwplg.imageio import read_image, to_input
    from lwplg.tensor import Tensor, no_grad
    with no_grad():
        x = ops.bilinear_resize(Tensor(to_input(read_image(gray))), 32, 32)
        p = ops.softmax(net(x), -1).data[0]
    assert _scores(a) == [float(f"{v:.6f}") for v in sorted(p, reverse=True)]


def test_train_divergence_exit(capsys):
    assert run(capsys, "train-toy", "--steps", "40", "--lr", "10000")[0] == 1


def test_infer_bad_image(capsys, tmp_path):
    bad = tmp_path / "x.ppm"
    bad.write_bytes(b"GIF89a")
    code, _, err = run(capsys, "infer", "--image", str(bad), "--variant", "micro", "--size", "32")
    assert code == 2 and "unsupported" in err
