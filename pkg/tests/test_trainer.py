import json

import numpy as np
import pytest

from oracles import unigram_ppl_oracle
from spt.datagen import CLOSED, OPEN, SCHEMA_FREE, Sample
from spt.errors import EmptyDataset, LabelMismatch, PhaseOrderError
from spt.formats import build_training_sequences, plain_ids, pretrain_docs, render
from spt.model import ModelConfig, init_params
from spt.registry import SchemaDef
from spt.trainer import (P1, P2, P3, PRETRAIN, TrainPlan, default_schedule, pretrain, run_phase,
                         unigram_perplexity, write_metrics)


def _snapshot(p):
    return {"base": {k: v.tobytes() for k, v in p.base.items()},
            "W_S": p.group_view("W_S").tobytes(), "rej": p.group_view("rej").tobytes(),
            "gen": p.group_view("gen").tobytes()}


def _changed(a, b):
    out = {g for g in ("W_S", "rej", "gen") if a[g] != b[g]}
    if a["base"] != b["base"]:
        out.add("base")
    return out


# ------------------------------------------------------------- sequences

def test_schema_free_single_rejection_target(small_data, small_vocab):
    pool, train, _ = small_data
    s = next(x for x in train if x.kind == SCHEMA_FREE)
    ids, tgt = build_training_sequences(s, pool, small_vocab)
    sup = tgt[tgt >= 0]
    assert list(sup) == [small_vocab.rej_id]


def test_two_schema_sample_targets(small_data, small_vocab):
    pool, _, _ = small_data
    s = Sample("Brent dips below $111 , Libya says oil crisis is over", CLOSED,
               ["MOVEMENT-DOWN-LOSS", "CRISIS"],
               {"MOVEMENT-DOWN-LOSS": {"event_trigger": "dips", "ITEM": "Brent",
                                       "FINAL_VALUE": "below $111"},
                "CRISIS": {"event_trigger": "crisis", "ITEM": "oil", "PLACE": "Libya"}})
    v = small_vocab
    ids, tgt = build_training_sequences(s, pool, v)
    pos = np.flatnonzero(tgt >= 0)
    assert [v.token(t) for t in tgt[pos]] == ["<MOVEMENT-DOWN-LOSS>", ",", "<CRISIS>", "\n"]
    # first schema after the cue; the second one is chosen after the separator
    assert [v.token(i) for i in ids[pos]] == ["\n", "MOVEMENT-DOWN-LOSS", ",", "CRISIS"]
    assert list(np.diff(pos)) == [1, 1, 1]
    assert "MOVEMENT-DOWN-LOSS, CRISIS\n" in render(s, pool).text


def test_open_sample_targets_cover_role_list(small_data, small_vocab):
    pool, train, _ = small_data
    s = next(x for x in train if x.kind == OPEN)
    v = small_vocab
    ids, tgt = build_training_sequences(s, pool, v)
    assert (ids == v.gen_id).sum() == 2
    supervised = [v.token(t) for t in tgt[tgt >= 0]]
    assert supervised[0] == "<Rej>"
    for role in s.gold_open_schema.roles:
        for w in role.split():
            assert w in supervised
    no_gen = build_training_sequences(s, pool, v, generation=False)[1]
    assert (no_gen >= 0).sum() == 1


def test_unknown_gold_schema(small_data, small_vocab):
    pool, _, _ = small_data
    s = Sample("x", CLOSED, ["NOPE"], {"NOPE": {}})
    with pytest.raises(LabelMismatch):
        build_training_sequences(s, pool, small_vocab)


def test_pretrain_docs_list_selection_in_random_order(small_data):
    pool, train, _ = small_data
    multi = [s for s in train if len(s.gold_schemas) > 1][:40]
    docs = pretrain_docs(multi, pool)
    flipped = sum(d.text != render(s, pool).text for d, s in zip(docs, multi))
    assert 0 < flipped < len(multi)
    assert [d.text for d in pretrain_docs(multi, pool)] == [d.text for d in docs]


# ------------------------------------------------------------------ plans

def test_plan_groups():
    assert TrainPlan(P1, 1, 0.1).groups == ("W_S",)
    assert set(TrainPlan(P2, 1, 0.1).groups) == {"rej", "gen"}
    assert set(TrainPlan(P3, 1, 0.1).groups) == {"W_S", "rej", "gen"}
    assert TrainPlan(PRETRAIN, 1, 0.1).groups == ("base",)
    with pytest.raises(ValueError):
        TrainPlan(P2, 1, 0.1, groups=("W_S", "rej", "gen"))


def test_default_schedule():
    plans = default_schedule(lr=5e-4)
    assert [p.epochs for p in plans] == [3, 3, 2]
    assert plans[2].lr == pytest.approx(5e-5)
    assert plans[0].lr == plans[1].lr == 5e-4


# --------------------------------------------------------------- pretrain

def test_pretrain_zero_epochs_is_identity(small_data, small_vocab):
    pool, train, _ = small_data
    p = init_params(ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32), small_vocab.n_base,
                    len(pool))
    before = _snapshot(p)
    p, rows = pretrain(p, pretrain_docs(train[:20], pool), small_vocab, 0, 1e-3)
    assert rows == [] and _snapshot(p) == before and p.phases_done == []


def test_pretrain_only_touches_base(small_data, small_vocab):
    pool, train, test = small_data
    p = init_params(ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32), small_vocab.n_base,
                    len(pool))
    before = _snapshot(p)
    val = [render(s, pool) for s in test[:10]]
    p, rows = pretrain(p, pretrain_docs(train[:64], pool), small_vocab, 2, 3e-3, val=val)
    assert _changed(before, _snapshot(p)) == {"base"}
    assert rows[0]["loss"] < rows[0]["first_loss"]
    assert rows[1]["loss"] < rows[0]["loss"]
    assert all(np.isfinite(r["metric"]["val_ppl"]) for r in rows)
    assert p.phases_done == [PRETRAIN]


def test_unigram_perplexity_matches_oracle(small_data, small_vocab):
    pool, train, test = small_data
    tr = [plain_ids(small_vocab, render(s, pool))[1] for s in train[:50]]
    va = [plain_ids(small_vocab, render(s, pool))[1] for s in test[:20]]
    got = unigram_perplexity(tr, va, len(small_vocab))
    assert got == pytest.approx(unigram_ppl_oracle(tr, va, len(small_vocab)), rel=1e-9)


# ----------------------------------------------------------------- phases

@pytest.fixture
def base(tiny_base):
    return tiny_base.copy()


@pytest.mark.parametrize("phase", [P1, P2, P3])
def test_phase_isolation(base, small_data, small_vocab, phase):
    pool, train, _ = small_data
    before = _snapshot(base)
    plan = TrainPlan(phase, 1, 1e-2, optimizer="adam")
    p, rows = run_phase(base, plan, train[:120], pool, small_vocab, force=True)
    changed = _changed(before, _snapshot(p))
    assert changed <= set(plan.groups)
    assert "base" not in changed
    if phase == P2:
        assert before["W_S"] == _snapshot(p)["W_S"]
    assert changed  # something did train
    assert rows[0]["phase"] == phase and np.isfinite(rows[0]["loss"])


def test_phase_metrics(base, small_data, small_vocab):
    pool, train, _ = small_data
    _, r1 = run_phase(base, TrainPlan(P1, 1, 1e-2, optimizer="adam"), train[:80], pool, small_vocab)
    assert {"schema_token_acc", "first_acc"} <= set(r1[0]["metric"])
    _, r2 = run_phase(base, TrainPlan(P2, 1, 1e-2, optimizer="adam"), train[:80], pool, small_vocab,
                      gen_probe=lambda p: {"generation_validity": 1.0})
    assert {"rejection_acc", "generation_validity"} <= set(r2[0]["metric"])
    assert base.phases_done[-2:] == [P1, P2]


def test_phase_order_enforced(base, small_data, small_vocab):
    pool, train, _ = small_data
    with pytest.raises(PhaseOrderError):
        run_phase(base, TrainPlan(P2, 1, 1e-3), train[:20], pool, small_vocab)
    with pytest.raises(PhaseOrderError):
        run_phase(base, TrainPlan(P3, 1, 1e-3), train[:20], pool, small_vocab)
    fresh = init_params(ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32),
                        small_vocab.n_base, len(pool))
    with pytest.raises(PhaseOrderError):
        run_phase(fresh, TrainPlan(P1, 1, 1e-3), train[:20], pool, small_vocab)
    run_phase(base, TrainPlan(P2, 1, 1e-3), train[:20], pool, small_vocab, force=True)


def test_empty_dataset(base, small_data, small_vocab):
    pool, train, _ = small_data
    free = [s for s in train if s.kind == SCHEMA_FREE]
    with pytest.raises(EmptyDataset):
        run_phase(base, TrainPlan(P1, 1, 1e-3), free, pool, small_vocab)


def test_zero_epoch_phase(base, small_data, small_vocab):
    pool, train, _ = small_data
    before = _snapshot(base)
    p, rows = run_phase(base, TrainPlan(P1, 0, 1e-3), train[:20], pool, small_vocab)
    assert rows == [] and _snapshot(p) == before


def test_frozen_flags_restored(base, small_data, small_vocab):
    pool, train, _ = small_data
    base.frozen = {"gen"}
    run_phase(base, TrainPlan(P1, 1, 1e-3), train[:20], pool, small_vocab)
    assert base.frozen == {"gen"}


def test_phase_deterministic(tiny_base, small_data, small_vocab):
    pool, train, _ = small_data
    outs = []
    for _ in range(2):
        p = tiny_base.copy()
        run_phase(p, TrainPlan(P1, 1, 1e-2, optimizer="adam"), train[:60], pool, small_vocab)
        run_phase(p, TrainPlan(P2, 1, 1e-2, optimizer="adam"), train[:60], pool, small_vocab)
        outs.append(p.ext.tobytes())
    assert outs[0] == outs[1]


def test_write_metrics(tmp_path):
    rows = [{"phase": P1, "epoch": 1, "loss": 0.5, "metric": {"first_acc": 0.9}}]
    write_metrics(rows, tmp_path / "m.jsonl", append=False)
    write_metrics(rows, tmp_path / "m.jsonl")
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert len(lines) == 2
    obj = json.loads(lines[0])
    assert obj["format_version"] == 1 and {"phase", "epoch", "loss", "metric"} <= set(obj)


def test_selection_masks_drop_listed_schemas(small_data, small_vocab, tiny_base):
    from spt.trainer import prepare
    pool, train, _ = small_data
    v = small_vocab
    s = next(x for x in train if x.kind == CLOSED and len(x.gold_schemas) >= 2)
    it, = prepare(tiny_base, [s], pool, v)
    doc = render(s, pool)
    (p0, _), (p1, _) = doc.decisions[:2]
    assert v.rej_id in it.masks[p0] and len(it.masks[p0]) == len(pool) + 1
    assert v.id(f"<{s.gold_schemas[0]}>") not in it.masks[p1]
    assert v.rej_id not in it.masks[p1] and len(it.masks[p1]) == len(pool) - 1
    # continue/stop positions carry no schema mask
    assert set(it.masks) == {p for p, _ in doc.decisions}
