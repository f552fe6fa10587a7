import numpy as np
import pytest

from rgpf.powerflow import load_case


@pytest.fixture(scope="session")
def ieee33():
    return load_case("ieee33")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FAST = ["--n-train", "24", "--n-test", "6", "--basis", "constant", "--n-starts", "1",
        "--outer-max-iter", "3", "--fraction", "0.125"]


def _pipeline(out_dir, seed=7, extra=()):
    """generate -> corrupt -> train -> predict -> evaluate; returns the artifact directory."""
    from rgpf.cli import main

    out = str(out_dir)
    common = ["--out-dir", out, "--seed", str(seed), *FAST, *extra]
    assert main(["generate", *common, "--mc-samples", "20"]) == 0
    assert main(["corrupt", *common, "--data", f"{out}/train.csv"]) == 0
    assert main(["train", *common, "--data", f"{out}/train_corrupted.csv"]) == 0
    assert main(["predict", *common, "--model", f"{out}/model_19_mag.json", "--data", f"{out}/test.csv"]) == 0
    assert main(["evaluate", *common, "--predictions", f"{out}/predictions.csv",
                 "--reference", f"{out}/test.csv"]) == 0
    return out_dir


@pytest.fixture
def run_pipeline():
    return _pipeline
