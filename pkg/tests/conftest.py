import numpy as np
import pytest

from spt.datagen import GenSpec, generate
from spt.formats import pretrain_docs
from spt.model import ModelConfig, init_params
from spt.registry import SchemaDef, SchemaPool
from spt.textcore import build_vocabulary


@pytest.fixture(scope="session")
def small_data():
    """A small but complete synthetic dataset (pool, train, test)."""
    return generate(GenSpec(n_train=400, n_test=60, open_ratio=0.15, seed=3))


@pytest.fixture(scope="session")
def small_vocab(small_data):
    pool, train, test = small_data
    docs = pretrain_docs(train, pool)
    return build_vocabulary([d.text for d in docs], pool.names)


def tiny_params(vocab, n_schemas, d=16, layers=1, seed=0, dtype="float32", tie=False):
    cfg = ModelConfig(d_model=d, n_layers=layers, n_heads=2, d_ff=32, max_seq_len=256,
                      dtype=dtype, seed=seed, tie_embeddings=tie)
    return init_params(cfg, vocab.n_base, n_schemas)


@pytest.fixture
def toy_pool():
    return SchemaPool((SchemaDef("ALPHA", ("Who", "What")),
                       SchemaDef("BETA", ("Where",)),
                       SchemaDef("GAMMA", ("When", "Why", "How"))))


@pytest.fixture
def toy_vocab(toy_pool):
    corpus = ["ann met bob in paris yesterday because rain",
              "select functions to extract structured information selected function",
              "none new based on the query i should extract using schema extraction results",
              "name arguments Who What Where When Why How ALPHA BETA GAMMA"]
    return build_vocabulary(corpus, toy_pool.names)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_base(small_data, small_vocab):
    """A one-layer base briefly pretrained on the small dataset."""
    from spt.formats import pretrain_docs
    from spt.trainer import pretrain
    pool, train, _ = small_data
    cfg = ModelConfig(d_model=32, n_layers=1, n_heads=2, d_ff=64, max_seq_len=256)
    params = init_params(cfg, small_vocab.n_base, len(pool))
    params, _ = pretrain(params, pretrain_docs(train, pool), small_vocab, 1, 3e-3)
    return params


def build_toy(seed=3):
    """Toy 3-schema model without fixtures (for hypothesis-driven tests)."""
    pool = SchemaPool((SchemaDef("ALPHA", ("Who", "What")),
                       SchemaDef("BETA", ("Where",)),
                       SchemaDef("GAMMA", ("When", "Why", "How"))))
    corpus = ["ann met bob in paris yesterday because rain",
              "select functions to extract structured information selected function",
              "none new based on the query i should extract using schema extraction results",
              "name arguments Who What Where When Why How ALPHA BETA GAMMA"]
    vocab = build_vocabulary(corpus, pool.names)
    return tiny_params(vocab, len(pool), seed=seed), vocab, pool


def run_cli(*argv):
    """Run the ``spt`` entry point in-process; return (exit code, parsed JSON stdout)."""
    import contextlib
    import io
    import json

    from spt.cli import main
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([str(a) for a in argv])
    text = buf.getvalue().strip()
    try:
        out = json.loads(text) if text else None
    except json.JSONDecodeError:
        out = text
    return code, out


def _full_pipeline(root):
    """gen-data → pretrain → train all → each eval track, with the default config.

    ``cpu_seconds`` holds the process CPU time of every step.
    """
    import time
    root.mkdir(parents=True, exist_ok=True)
    data, out = root / "data", root / "runs"
    timings, stdout = {}, {}
    steps = [
        ("gen-data", ["gen-data", "--out", data]),
        ("pretrain", ["pretrain", "--data", data, "--out", out]),
        ("train", ["train", "--phase", "all", "--data", data, "--out", out]),
    ] + [(f"eval-{t}", ["eval", t, "--data", data, "--out", out,
                        "--report", out / f"report-{t}.json"])
         for t in ("retrieval", "extraction", "generation", "bench")]
    for name, argv in steps:
        t0 = time.process_time()
        code, res = run_cli(*argv, "--json")
        timings[name] = time.process_time() - t0
        assert code == 0, f"{name} exited with {code}"
        stdout[name] = res
    return {"root": root, "data": data, "out": out, "cpu_seconds": timings, "stdout": stdout}


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """One full default-config run shared by the slow tests."""
    return _full_pipeline(tmp_path_factory.mktemp("run_a"))


@pytest.fixture(scope="session")
def pipeline_repeat(tmp_path_factory, pipeline):
    """A second, independent run of the same config for reproducibility checks."""
    return _full_pipeline(tmp_path_factory.mktemp("run_b"))


@pytest.fixture(scope="session")
def trained(pipeline):
    """(params, vocab, pool, test samples) of the final phase-3 checkpoint."""
    from spt import checkpoint
    from spt.datagen import read_jsonl
    params, vocab, pool, _ = checkpoint.load(pipeline["out"] / "phase3.spt")
    return params, vocab, pool, read_jsonl(pipeline["data"] / "test.jsonl")


# --------------------------------------------------------- acceptance summary

CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, title, ok, detail)`` records and prints one verdict line."""
    def record(n, title, ok, detail=""):
        CRITERIA[n] = (title, bool(ok), detail)
        print(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
