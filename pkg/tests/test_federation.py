import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedctr.dataio import Impressions
from fedctr.federation import (
    AD_PLATFORM,
    USER_SERVER,
    AggregatedEmbedding,
    CentralizedModel,
    EmbeddingRequest,
    FedConfig,
    Federation,
    LocalEmbedding,
    LocalGradient,
    PartyId,
    ProtocolError,
    RecordingTransport,
    TapeCache,
    UserGradient,
    WireError,
    audit_log,
    decode,
    encode,
    platform_id,
    request_id,
)
from fedctr.models import UserModel
from fedctr.nnkit import ForwardTape
from fedctr.privacy import privatize


def _fed(dataset, model_cfg, **kw):
    base = dict(model=model_cfg, lambda_ldp=0.0, lambda_dp=0.0, optimizer="sgd", lr=0.05, batch_size=8, seed=0)
    base.update(kw)
    transport = base.pop("transport", None)
    return Federation(dataset, FedConfig(**base), transport)


# ---------------------------------------------------------------- wire format

RID = bytes(range(16))
finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


def _same(a, b):
    assert type(a) is type(b)
    assert a.request_id == b.request_id
    for name in ("user_ids", "timestamps", "embeddings", "gradient", "cold_start"):
        if hasattr(a, name):
            assert np.asarray(getattr(a, name)).tobytes() == np.asarray(getattr(b, name)).tobytes()
    for name in ("platform", "training"):
        if hasattr(a, name):
            assert getattr(a, name) == getattr(b, name)


matrices = st.integers(0, 5).flatmap(lambda r: arrays(np.float64, (r, 3), elements=finite))


@given(matrices, st.integers(1, 9), st.binary(min_size=16, max_size=16))
def test_round_trip_vector_messages(m, platform, rid):
    cold = np.arange(m.shape[0]) % 2 == 0
    for msg in (
        LocalEmbedding(platform, m, cold, rid),
        AggregatedEmbedding(m, rid),
        UserGradient(m, rid),
        LocalGradient(platform, m, rid),
    ):
        _same(msg, decode(encode(msg)))


@given(st.lists(st.integers(0, 2**62), max_size=6), st.booleans())
def test_round_trip_request(ids, training):
    ts = np.arange(len(ids), dtype=np.int64) - 3
    msg = EmbeddingRequest(np.array(ids, dtype=np.int64), ts, RID, training)
    _same(msg, decode(encode(msg)))


def test_round_trip_special_floats():
    m = np.array([[0.0, -0.0, np.inf], [5e-324, -1.7976931348623157e308, np.nan]])
    out = decode(encode(UserGradient(m, RID)))
    assert out.gradient.tobytes() == m.tobytes()


def test_frame_errors():
    frame = encode(AggregatedEmbedding(np.ones((2, 2)), RID))
    with pytest.raises(WireError):
        decode(frame[:-3])
    with pytest.raises(WireError):
        decode(frame[:4] + bytes([9]) + frame[5:])
    with pytest.raises(WireError):
        encode(AggregatedEmbedding(np.ones((2, 2)), b"short"))
    with pytest.raises(WireError):
        encode(AggregatedEmbedding(np.ones(3), RID))


def test_frame_header_layout():
    frame = encode(LocalGradient(3, np.zeros((1, 2)), RID))
    assert int.from_bytes(frame[:4], "little") == len(frame) - 4
    assert frame[4] == 1 and frame[5] == LocalGradient.kind
    assert frame[6:22] == RID
    assert int.from_bytes(frame[22:24], "little") == 3


# ---------------------------------------------------------------- transport and caches

def test_party_ids():
    with pytest.raises(ValueError):
        PartyId("bank")
    with pytest.raises(ValueError):
        platform_id(0)
    assert str(platform_id(2)) == "behavior_platform[2]"


def test_unknown_party_rejected(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    with pytest.raises(ProtocolError, match="unknown party"):
        fed.transport.send(AD_PLATFORM, platform_id(7), UserGradient(np.zeros((1, 8)), RID))


def test_tape_cache_lru_and_once():
    c = TapeCache(capacity=2)
    for k in (b"a", b"b", b"c"):
        c.put(k * 16, k)
    assert b"a" * 16 not in c and c.evicted == 1
    assert c.take(b"b" * 16) == b"b"
    with pytest.raises(ProtocolError):
        c.take(b"b" * 16)
    with pytest.raises(ProtocolError):
        c.put(b"c" * 16, 1)
    with pytest.raises(ValueError):
        TapeCache(0)


def test_request_id_is_16_bytes_and_batch_dependent():
    a = request_id(1, [1, 2], [3, 4])
    assert len(a) == 16
    assert a != request_id(1, [1, 2], [3, 5])
    assert a != request_id(2, [1, 2], [3, 4])


# ---------------------------------------------------------------- protocol

def _batch(ds, n=8, start=0):
    return ds.impressions.subset(np.arange(start, start + n))


def test_message_count_and_audit(tiny_dataset, tiny_model_config):
    tr = RecordingTransport()
    fed = _fed(tiny_dataset, tiny_model_config, transport=tr, lambda_ldp=0.01, lambda_dp=0.005)
    K = len(fed.platform_ids)
    fed.train_step(_batch(tiny_dataset))
    kinds = [e.kind for e in tr.log]
    # K requests fanned out, K local embeddings, 1 aggregate, 1 user gradient, K local gradients,
    # plus the ad platform's own request to the server
    assert len(kinds) == 3 * K + 3
    fan_out = [e for e in tr.log if e.kind == "EmbeddingRequest" and e.src == USER_SERVER]
    assert len(fan_out) == K
    assert kinds.count("LocalEmbedding") == K and kinds.count("LocalGradient") == K
    assert kinds.count("AggregatedEmbedding") == 1 and kinds.count("UserGradient") == 1
    assert len({e.request_id for e in tr.log}) == 1
    assert audit_log(tr.log, tiny_dataset) == []
    tr.clear()
    fed.infer_ctr(3, [0, 1, 2])
    assert len(tr.log) == 2 * K + 2
    assert audit_log(tr.log, tiny_dataset) == []


def test_audit_flags_text():
    from fedctr.dataio import Vocab
    from fedctr.federation import LogEntry

    class DS:
        vocab = Vocab(["sailboat"])
        n_users = 5

    frame = encode(AggregatedEmbedding(np.frombuffer(b"sailboat", dtype="<f8").reshape(1, 1), RID))
    problems = audit_log([LogEntry(1, USER_SERVER, AD_PLATFORM, "AggregatedEmbedding", RID, (1, 1), len(frame), frame)], DS)
    assert problems and "sailboat" in problems[0]
    req = encode(EmbeddingRequest(np.array([99]), np.array([0]), RID))
    assert audit_log([LogEntry(2, AD_PLATFORM, USER_SERVER, "EmbeddingRequest", RID, (1,), len(req), req)], DS)


def test_local_gradients_match_sent_embeddings(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    sent, got = {}, {}

    def tap(src, dst, msg):
        if isinstance(msg, LocalEmbedding):
            sent.setdefault(msg.platform, []).append(msg.request_id)
        elif isinstance(msg, LocalGradient):
            got.setdefault(msg.platform, []).append(msg.request_id)

    fed.transport.taps.append(tap)
    for s in range(3):
        fed.train_step(_batch(tiny_dataset, start=8 * s))
    assert got == sent
    for bp in fed.platforms.values():
        assert len(bp.tapes) == 0


def test_unknown_request_id_rejected(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    with pytest.raises(ProtocolError, match="no pending"):
        fed.transport.send(AD_PLATFORM, USER_SERVER, UserGradient(np.zeros((2, 8)), RID))
    with pytest.raises(ProtocolError):
        fed.transport.send(USER_SERVER, platform_id(1), LocalGradient(1, np.zeros((2, 8)), RID))
    with pytest.raises(ProtocolError, match="addressed"):
        fed.transport.send(USER_SERVER, platform_id(1), LocalGradient(2, np.zeros((2, 8)), RID))


def test_failure_policies(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    fed.transport.offline.add(platform_id(2))
    with pytest.raises(ProtocolError, match="platform 2"):
        fed.train_step(_batch(tiny_dataset))

    fed = _fed(tiny_dataset, tiny_model_config, failure_policy="renormalize")
    weights = []
    orig = fed.server.aggregator.forward

    def spy(U, tape, present=None):
        out = orig(U, tape, present)
        weights.append(fed.server.aggregator.weights(tape))
        return out

    fed.server.aggregator.forward = spy
    fed.transport.offline.add(platform_id(2))
    before = fed.platforms[2].model.named_blocks()
    before = {k: v.copy() for k, v in before.items()}
    loss = fed.train_step(_batch(tiny_dataset))
    assert np.isfinite(loss)
    np.testing.assert_allclose(weights[-1].sum(axis=1), 1.0)
    assert np.all(weights[-1][:, 1] == 0.0)
    for k, v in fed.platforms[2].model.named_blocks().items():
        np.testing.assert_array_equal(v, before[k])


def test_dim_mismatch_names_platform(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    bp = fed.platforms[2]
    orig = bp._embed

    def bad(msg):
        m = orig(msg)
        return LocalEmbedding(m.platform, m.embeddings[:, :3], m.cold_start, m.request_id)

    bp._embed = bad
    with pytest.raises(ProtocolError, match="platform 2"):
        fed.infer_ctr(0, [1])


def test_infer_matches_monolithic_k1(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config, platforms=[2])
    cm = CentralizedModel.from_federation(fed)
    ads = np.arange(10)
    for user in (0, 5, 17):
        y = fed.infer_ctr(user, ads)
        ref = cm.predict(np.full(10, user), ads, np.full(10, np.iinfo(np.int64).max))
        assert y.tobytes() == ref.tobytes()


def test_duplicate_candidates(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config, lambda_ldp=0.01, lambda_dp=0.005)
    y = fed.infer_ctr(4, [3, 7, 3, 3])
    assert y[0] == y[2] == y[3]


def test_independent_composition_oracle(tiny_dataset, tiny_model_config):
    # compose the forward pass by hand from the parties' models
    fed = _fed(tiny_dataset, tiny_model_config)
    ads = np.arange(10)
    y = fed.infer_ctr(9, ads)
    ts = np.array([np.iinfo(np.int64).max])
    U = np.stack(
        [fed.platforms[i].model.forward(fed.platforms[i].local_histories([9], ts), ForwardTape()) for i in fed.platform_ids],
        axis=1,
    )
    u = fed.server.aggregator.forward(U, ForwardTape())
    d = fed.ad_platform.ad_model.forward(*fed.ad_platform.ad_inputs(ads), ForwardTape())
    ref = 1.0 / (1.0 + np.exp(-(d @ u[0])))
    np.testing.assert_allclose(y, ref, rtol=1e-12)


@pytest.mark.parametrize("platforms", [None, [2]])
def test_federated_equals_centralized(tiny_dataset, tiny_model_config, platforms):
    fed = _fed(tiny_dataset, tiny_model_config, platforms=platforms)
    cm = CentralizedModel.from_federation(fed)
    for s in range(12):
        batch = _batch(tiny_dataset, start=8 * s)
        l1 = fed.train_step(batch)
        l2 = cm.train_step(batch)
        assert l1 == pytest.approx(l2, abs=1e-12)
    owners = [fed.platforms[i].model for i in fed.platform_ids]
    owners += [fed.server.aggregator, fed.ad_platform.ad_model, fed.ad_platform.predictor]
    refs = cm.user_models + [cm.aggregator, cm.ad_model, cm.predictor]
    moved = 0.0
    for a, b in zip(owners, refs):
        for k, v in a.named_blocks().items():
            assert np.max(np.abs(v - b.named_blocks()[k]), initial=0.0) <= 1e-10, k
    for p0, p1 in zip(CentralizedModel.from_federation(_fed(tiny_dataset, tiny_model_config, platforms=platforms)).params, cm.params):
        for k in p0.params:
            moved = max(moved, float(np.abs(p0.params[k] - p1.params[k]).max(initial=0.0)))
    assert moved > 1e-4


@pytest.mark.parametrize("predictor,aggregator", [("fm", "concat"), ("dense", "max"), ("outer", "average")])
def test_federated_equals_centralized_variants(tiny_dataset, tiny_model_config, predictor, aggregator):
    cfg = tiny_model_config
    cfg.predictor, cfg.aggregator = predictor, aggregator
    fed = _fed(tiny_dataset, cfg)
    cm = CentralizedModel.from_federation(fed)
    for s in range(4):
        batch = _batch(tiny_dataset, start=8 * s)
        assert fed.train_step(batch) == pytest.approx(cm.train_step(batch), abs=1e-12)
    for a, b in zip(fed.parameters(), cm.params):
        for k in a.params:
            assert np.max(np.abs(a.params[k] - b.params[k]), initial=0.0) <= 1e-10


def test_train_step_reproducible(tiny_dataset, tiny_model_config):
    tiny_model_config.dropout = 0.2
    runs = []
    for _ in range(2):
        fed = _fed(tiny_dataset, tiny_model_config, lambda_ldp=0.01, lambda_dp=0.005, optimizer="adam", lr=1e-3)
        losses = [fed.train_step(_batch(tiny_dataset, start=8 * s)) for s in range(2)]
        runs.append((losses, fed.snapshot()))
    assert runs[0][0] == runs[1][0]
    for k, v in runs[0][1].items():
        assert v.tobytes() == runs[1][1][k].tobytes()


def test_saturated_batch_barely_moves(tiny_dataset, tiny_model_config):
    tiny_model_config.predictor = "dense"
    fed = _fed(tiny_dataset, tiny_model_config)
    # a huge bias makes every prediction round to 1; with all labels 1 there is nothing to learn
    fed.ad_platform.predictor.dense.params["b"][:] = 50.0
    batch = _batch(tiny_dataset)
    batch = Impressions(batch.user_ids, batch.ad_ids, np.ones(len(batch), int), batch.timestamps)
    before = fed.snapshot()
    loss = fed.train_step(batch)
    assert loss < 1e-10
    after = fed.snapshot()
    assert max(float(np.abs(after[k] - before[k]).max(initial=0.0)) for k in before) < 1e-12


def test_noise_is_constant_for_backward(tiny_model_config):
    m = UserModel(tiny_model_config, np.random.default_rng(0))
    tokens = np.random.default_rng(1).integers(1, 50, size=(3, 2, 4))
    g = np.random.default_rng(2).normal(size=(3, tiny_model_config.embed_dim))

    def grads(scale):
        m.zero_grads()
        tape = ForwardTape()
        u = m.forward(tokens, tape)
        privatize(u, scale, np.random.default_rng(3))
        m.backward(g, tape)
        return [v.copy() for p in m.parameters() for v in p.grads.values()]

    for a, b in zip(grads(0.0), grads(0.5)):
        assert a.tobytes() == b.tobytes()


def test_zero_noise_is_bit_exact_noop(tiny_dataset, tiny_model_config):
    a = _fed(tiny_dataset, tiny_model_config, lambda_ldp=0.0, lambda_dp=0.0)
    b = _fed(tiny_dataset, tiny_model_config, lambda_ldp=0.0, lambda_dp=0.0)
    # draining the noise streams must not change anything when the scales are 0
    for bp in b.platforms.values():
        bp.noise_rng.random(100)
    b.server.noise_rng.random(100)
    imp = tiny_dataset.impressions.subset(np.arange(40))
    assert a.predict(imp).tobytes() == b.predict(imp).tobytes()


def test_timestamp_filter(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    bp = fed.platforms[1]
    user = next(u for u in bp._store.users() if len(bp._store.history(u)) >= 3)
    times = bp._store._times[user]
    h = bp.local_histories([user], [int(times[2])])
    assert (h[0] != 0).any(axis=1).sum() == 2
    assert not (bp.local_histories([user], [int(times[0])]) != 0).any()


# ---------------------------------------------------------------- epochs

def test_zero_epochs(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    before = fed.snapshot()
    assert fed.train_epochs(tiny_dataset.impressions, 0) == []
    after = fed.snapshot()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_empty_train_rejected(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    with pytest.raises(ValueError):
        fed.train_epochs(tiny_dataset.impressions.subset([]), 1)
    with pytest.raises(ValueError):
        fed.train_step(tiny_dataset.impressions.subset([]))


def test_loss_decreases(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config, optimizer="adam", lr=1e-2, batch_size=20)
    train = tiny_dataset.impressions.subset(np.arange(200))
    hist = fed.train_epochs(train, 5)
    losses = [h["loss"] for h in hist]
    assert len(hist) == 5 and [h["epoch"] for h in hist] == [1, 2, 3, 4, 5]
    assert losses[-1] < losses[0]


def test_keep_best_restores_best_epoch(tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config, optimizer="adam", lr=1e-2, batch_size=20)
    train = tiny_dataset.impressions.subset(np.arange(200))
    val = tiny_dataset.impressions.subset(np.arange(200, 300))
    snaps = []
    hist = fed.train_epochs(train, 3, val=val, eval_hook=lambda f, r: snaps.append(f.snapshot()))
    best = int(np.argmax([h["val_auc"] for h in hist]))
    final = fed.snapshot()
    assert all(final[k].tobytes() == snaps[best][k].tobytes() for k in final)
    assert all(0.0 <= h["val_auc"] <= 1.0 and 0.0 <= h["val_ap"] <= 1.0 for h in hist)


def test_checkpoint_round_trip(tmp_path, tiny_dataset, tiny_model_config):
    fed = _fed(tiny_dataset, tiny_model_config)
    fed.train_step(_batch(tiny_dataset))
    fed.save_checkpoint(tmp_path / "ck")
    other = _fed(tiny_dataset, tiny_model_config, seed=5)
    other.load_checkpoint(tmp_path / "ck")
    a, b = fed.snapshot(), other.snapshot()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_unknown_platform_rejected(tiny_dataset, tiny_model_config):
    with pytest.raises(ValueError, match="not in dataset"):
        _fed(tiny_dataset, tiny_model_config, platforms=[1, 5])
