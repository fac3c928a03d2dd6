"""Learned semantic acknowledgement: a twin-branch similarity scorer.

The scorer pools the reference and reconstructed confidence maps to a fixed
grid, embeds both through one shared dense branch, and maps the concatenated
embeddings to a single sigmoid score. Training is pairwise rank learning on
queries of K samplings of the same source: each pair ordered by true
similarity contributes a logistic cost, and the per-sample lambda
accumulation of those pair gradients drives the parameter update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import nnkit
from .scenegen import SIMILARITY_CAP
from .tensors import ConfidenceMap


@dataclass(frozen=True)
class DetectorConfig:
    ack_threshold: float = 0.72
    sharpness: float = 1.0  # pairwise logistic scale
    pool: int = 16
    branch_width: int = 64

    def __post_init__(self):
        if not 0.0 < self.ack_threshold < 1.0:
            raise ValueError("ack_threshold must be in (0, 1)")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")


@dataclass
class SimilarityScorer:
    branch: nnkit.DenseNet  # shared twin branch over pooled maps
    head: nnkit.DenseNet  # concatenated embeddings -> sigmoid score
    pool: int = 16


def new_scorer(cfg: DetectorConfig, seed: int) -> SimilarityScorer:
    n_in = cfg.pool * cfg.pool
    w = cfg.branch_width
    branch = nnkit.init_dense((n_in, w, w), ("relu", "relu"), seed)
    head = nnkit.init_dense((2 * w, w, 1), ("relu", "sigmoid"), seed + 1)
    return SimilarityScorer(branch, head, cfg.pool)


def pool_map(values: np.ndarray, pool: int) -> np.ndarray:
    """Adaptive average pooling of an (H, W) map down to (pool, pool)."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    if h < pool or w < pool:
        raise ValueError(f"map shape {values.shape} smaller than pool grid {pool}")
    out = np.empty((pool, pool))
    hb = [(i * h) // pool for i in range(pool + 1)]
    wb = [(j * w) // pool for j in range(pool + 1)]
    for i in range(pool):
        for j in range(pool):
            out[i, j] = values[hb[i] : hb[i + 1], wb[j] : wb[j + 1]].mean()
    return out


def _as_pooled(m, pool: int) -> np.ndarray:
    values = m.values if isinstance(m, ConfidenceMap) else np.asarray(m, dtype=np.float64)
    if values.shape == (pool, pool):
        return values
    return pool_map(values, pool)


def score(scorer: SimilarityScorer, ref, hyp) -> float:
    """Similarity score in (0, 1) for a reference/reconstruction map pair."""
    return float(score_pooled(scorer, _as_pooled(ref, scorer.pool), _as_pooled(hyp, scorer.pool)))


def score_pooled(scorer: SimilarityScorer, ref_pooled: np.ndarray, hyp_pooled: np.ndarray):
    """Score pre-pooled maps; hyp_pooled may carry a leading batch axis.

    Accepted hyp shapes: (p, p) or (p*p,) for one map, (K, p, p) or
    (K, p*p) for a batch of K maps.
    """
    width = scorer.pool * scorer.pool
    ref = np.asarray(ref_pooled, dtype=np.float64).reshape(1, width)
    hyp = np.asarray(hyp_pooled, dtype=np.float64)
    if hyp.ndim == 3 and hyp.shape[1:] == (scorer.pool, scorer.pool):
        hyp = hyp.reshape(hyp.shape[0], width)
    elif hyp.shape == (scorer.pool, scorer.pool) or hyp.shape == (width,):
        hyp = hyp.reshape(1, width)
    elif not (hyp.ndim == 2 and hyp.shape[1] == width):
        raise ValueError(f"bad pooled map shape {hyp.shape} for pool {scorer.pool}")
    emb_ref = nnkit.forward(scorer.branch, ref)
    emb_hyp = nnkit.forward(scorer.branch, hyp)
    head_in = np.concatenate([np.repeat(emb_ref, emb_hyp.shape[0], axis=0), emb_hyp], axis=1)
    s = nnkit.forward(scorer.head, head_in)[:, 0]
    return s if s.size > 1 else float(s[0])


def ack_decide(s_hat: float, cfg: DetectorConfig) -> bool:
    """ACK only if the score strictly exceeds the threshold; ties are NACK."""
    return bool(s_hat > cfg.ack_threshold)


def pair_probability(s_m: float, s_n: float, sharpness: float = 1.0):
    """Modeled probability that sample m outranks sample n."""
    d = sharpness * (np.asarray(s_m, dtype=np.float64) - np.asarray(s_n, dtype=np.float64))
    out = np.empty_like(np.atleast_1d(d))
    dd = np.atleast_1d(d)
    pos = dd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-dd[pos]))
    ez = np.exp(dd[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.reshape(np.shape(d)) if np.ndim(d) else float(out[0])


def pair_loss(s_m, s_n, order: int, sharpness: float = 1.0):
    """Pairwise logistic cost; order is sign(S_m - S_n) in {-1, 0, 1}."""
    d = sharpness * (np.asarray(s_m, dtype=np.float64) - np.asarray(s_n, dtype=np.float64))
    return 0.5 * (1 - order) * d + np.logaddexp(0.0, -d)


_LAMBDA_GRID = float(2**30)


def lambda_gradients(s_hat: np.ndarray, s_true: np.ndarray, sharpness: float = 1.0) -> np.ndarray:
    """Per-sample gradient of the summed pair losses with respect to the scores.

    Pairs are taken once each, oriented so the first element has the larger
    true similarity; equal-similarity pairs contribute nothing. The returned
    vector sums to zero exactly.
    """
    s_hat = np.asarray(s_hat, dtype=np.float64).reshape(-1)
    s_true = np.asarray(s_true, dtype=np.float64).reshape(-1)
    if s_hat.shape != s_true.shape:
        raise ValueError("score and similarity vectors must match")
    k = s_hat.size
    if k < 2:
        return np.zeros(k)
    d = sharpness * (s_hat[:, None] - s_hat[None, :])
    # stable 1/(1+exp(d)) for the oriented pairs
    with np.errstate(over="ignore"):
        inv = np.where(d >= 0, np.exp(-d) / (1.0 + np.exp(-d)), 1.0 / (1.0 + np.exp(d)))
    lam_pair = -sharpness * inv
    oriented = s_true[:, None] > s_true[None, :]
    lam_pair = np.where(oriented, lam_pair, 0.0)
    # snap pair terms to a dyadic grid: sums of 2^-30 multiples are exact in
    # double precision, so the zero-sum identity below holds bitwise rather
    # than merely to rounding error (the 5e-10 snap is far below any
    # gradient tolerance that matters)
    lam_pair = np.round(lam_pair * _LAMBDA_GRID) / _LAMBDA_GRID
    return lam_pair.sum(axis=1) - lam_pair.sum(axis=0)


@dataclass(frozen=True)
class RankQuery:
    ref_pooled: np.ndarray  # (pool, pool)
    samp_pooled: np.ndarray  # (K, pool, pool)
    s_true: np.ndarray  # (K,)

    def __post_init__(self):
        ref = np.asarray(self.ref_pooled, dtype=np.float64)
        samp = np.asarray(self.samp_pooled, dtype=np.float64)
        s = np.asarray(self.s_true, dtype=np.float64)
        if samp.ndim != 3 or samp.shape[1:] != ref.shape or s.shape != (samp.shape[0],):
            raise ValueError("inconsistent query shapes")
        for a in (ref, samp, s):
            a.setflags(write=False)
        object.__setattr__(self, "ref_pooled", ref)
        object.__setattr__(self, "samp_pooled", samp)
        object.__setattr__(self, "s_true", s)


@dataclass(frozen=True)
class RankCorpus:
    queries: tuple[RankQuery, ...]
    pool: int


@dataclass(frozen=True)
class RankTrainConfig:
    seed: int = 0
    epochs: int = 50
    lr: float = 2e-4
    sharpness: float = 1.0
    holdout: float = 0.25
    # the rank objective is scale-free in the logit, so margins grow without
    # bound under Adam; decoupled decay keeps the head in its responsive range
    weight_decay: float = 5e-2
    # queries averaged per Adam step; single-query steps are too noisy and
    # destroy the ordering a few epochs after it is first reached
    batch_queries: int = 8


def _query_step(scorer, query: RankQuery, sharpness: float):
    """Scores, lambdas, and parameter gradients for one query."""
    k = query.s_true.size
    x = np.concatenate(
        [query.ref_pooled.reshape(1, -1), query.samp_pooled.reshape(k, -1)], axis=0
    )
    emb, tape_b = nnkit.forward_tape(scorer.branch, x)
    width = emb.shape[1]
    head_in = np.concatenate([np.repeat(emb[0:1], k, axis=0), emb[1:]], axis=1)
    s_hat, tape_h = nnkit.forward_tape(scorer.head, head_in)
    s_hat = s_hat[:, 0]
    lam = lambda_gradients(s_hat, query.s_true, sharpness)
    if not np.any(lam):
        return s_hat, None, None
    head_grads, g_head_in = nnkit.backward(scorer.head, tape_h, lam[:, None])
    g_emb = np.empty_like(emb)
    g_emb[0] = g_head_in[:, :width].sum(axis=0)
    g_emb[1:] = g_head_in[:, width:]
    branch_grads, _ = nnkit.backward(scorer.branch, tape_b, g_emb)
    return s_hat, branch_grads, head_grads


def split_corpus(corpus: RankCorpus, cfg: RankTrainConfig) -> tuple[RankCorpus, RankCorpus]:
    """Deterministic train/held-out split by shuffled query index."""
    n = len(corpus.queries)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    order = rng.permutation(n)
    n_hold = max(1, int(round(cfg.holdout * n))) if n > 1 else 0
    hold = set(order[:n_hold].tolist())
    train_q = tuple(q for i, q in enumerate(corpus.queries) if i not in hold)
    hold_q = tuple(q for i, q in enumerate(corpus.queries) if i in hold)
    return RankCorpus(train_q, corpus.pool), RankCorpus(hold_q, corpus.pool)


def train_ranker(
    corpus: RankCorpus, scorer: SimilarityScorer, cfg: RankTrainConfig
) -> tuple[SimilarityScorer, dict]:
    """Adam rank training over queries; returns the scorer and a history dict.

    The held-out split tracks pairwise ordering accuracy per epoch and the
    best-accuracy parameters are restored at the end (ties keep the earliest
    epoch), so long runs cannot regress past their best ordering.
    """
    train_c, hold_c = split_corpus(corpus, cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))
    b_state = nnkit.AdamState.init(scorer.branch)
    h_state = nnkit.AdamState.init(scorer.head)
    history = {"pair_loss": [], "holdout_accuracy": []}
    best_acc, best_nets = -1.0, None
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_c.queries))
        ep_loss, ep_pairs = 0.0, 0
        for start in range(0, order.size, cfg.batch_queries):
            b_grads = nnkit.zeros_like_grads(scorer.branch)
            h_grads = nnkit.zeros_like_grads(scorer.head)
            got = 0
            for qi in order[start : start + cfg.batch_queries]:
                query = train_c.queries[qi]
                s_hat, branch_grads, head_grads = _query_step(scorer, query, cfg.sharpness)
                loss, pairs = _query_pair_loss(s_hat, query.s_true, cfg.sharpness)
                ep_loss += loss
                ep_pairs += pairs
                if branch_grads is None:
                    continue
                nnkit.add_grads(b_grads, branch_grads, 1.0)
                nnkit.add_grads(h_grads, head_grads, 1.0)
                got += 1
            if not got:
                continue
            _scale_grads(b_grads, 1.0 / got)
            _scale_grads(h_grads, 1.0 / got)
            scorer.branch, _ = nnkit.adam_step(
                scorer.branch, b_grads, b_state, cfg.lr, weight_decay=cfg.weight_decay
            )
            scorer.head, _ = nnkit.adam_step(
                scorer.head, h_grads, h_state, cfg.lr, weight_decay=cfg.weight_decay
            )
        acc = pairwise_accuracy(scorer, hold_c)
        history["pair_loss"].append(ep_loss / max(1, ep_pairs))
        history["holdout_accuracy"].append(acc)
        if not math.isnan(acc) and acc > best_acc:
            best_acc, best_nets = acc, (scorer.branch, scorer.head)
    if best_nets is not None:
        scorer.branch, scorer.head = best_nets
    return scorer, history


def _scale_grads(grads, factor: float) -> None:
    for gw, gb in grads:
        gw *= factor
        gb *= factor


def _query_pair_loss(s_hat: np.ndarray, s_true: np.ndarray, sharpness: float):
    total, pairs = 0.0, 0
    k = s_true.size
    for m in range(k):
        for n in range(k):
            if s_true[m] > s_true[n]:
                total += float(pair_loss(s_hat[m], s_hat[n], 1, sharpness))
                pairs += 1
    return total, pairs


def query_scores(scorer: SimilarityScorer, query: RankQuery) -> np.ndarray:
    s = score_pooled(scorer, query.ref_pooled, query.samp_pooled.reshape(query.s_true.size, -1))
    return np.atleast_1d(s)


def query_logits(scorer: SimilarityScorer, query: RankQuery) -> np.ndarray:
    """Pre-sigmoid scores; same ordering as query_scores but never rounds
    to exact ties when the sigmoid saturates."""
    k = query.s_true.size
    x = np.concatenate(
        [query.ref_pooled.reshape(1, -1), query.samp_pooled.reshape(k, -1)], axis=0
    )
    emb = nnkit.forward(scorer.branch, x)
    head_in = np.concatenate([np.repeat(emb[0:1], k, axis=0), emb[1:]], axis=1)
    _, tape = nnkit.forward_tape(scorer.head, head_in)
    return tape.preacts[-1][:, 0].copy()


def pairwise_accuracy(scorer: SimilarityScorer, corpus: RankCorpus) -> float:
    """Fraction of strictly-ordered true pairs the scorer orders correctly."""
    good, total = 0, 0
    for query in corpus.queries:
        s_hat = query_logits(scorer, query)
        st = query.s_true
        for m in range(st.size):
            for n in range(st.size):
                if st[m] > st[n]:
                    total += 1
                    if s_hat[m] > s_hat[n]:
                        good += 1
    return good / total if total else float("nan")


def calibrate_scorer(
    scorer: SimilarityScorer,
    corpus: RankCorpus,
    s_lo: float = 0.3,
    s_hi: float = 0.95,
) -> SimilarityScorer:
    """Affine logit recalibration against a corpus score distribution.

    Rank training fixes only the ordering of scores, not their location, so
    the raw sigmoid outputs may crowd one end of (0,1) where a fixed
    acknowledgement threshold cannot separate them. This anchors the mean
    logit of the corpus's top true-similarity quartile at score s_hi and the
    bottom quartile at s_lo, folding the affine map into the final head
    layer. Ordering (and therefore ranking accuracy) is unchanged; only the
    score locations an acknowledgement threshold cuts through move.
    """
    z = np.concatenate([query_logits(scorer, q) for q in corpus.queries])
    s = np.concatenate([q.s_true for q in corpus.queries])
    lo_cut, hi_cut = np.quantile(s, [0.25, 0.75])
    z_lo = float(z[s <= lo_cut].mean())
    z_hi = float(z[s >= hi_cut].mean())
    l_lo = math.log(s_lo / (1.0 - s_lo))
    l_hi = math.log(s_hi / (1.0 - s_hi))
    a = (l_hi - l_lo) / (z_hi - z_lo) if z_hi > z_lo else 1.0
    b = l_hi - a * z_hi
    last = scorer.head.layers[-1]
    scaled = nnkit.DenseLayer(a * last.w, a * last.b + b, last.act, last.prelu_alpha)
    head = nnkit.DenseNet(scorer.head.layers[:-1] + [scaled])
    return SimilarityScorer(scorer.branch, head, scorer.pool)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC (ties get average rank)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both positive and negative labels")
    ranks = rankdata(scores)
    return (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def build_corpus(
    head,
    scene_cfg,
    cr: float,
    codec_obj,
    ofdm_cfg,
    profile,
    snr_list,
    n_queries: int,
    master_seed: int,
    pool: int = 16,
) -> RankCorpus:
    """Rank corpus from the full link: K samplings of each source at the given SNRs.

    Each query is one scene; its reference map comes from the masked feature
    actually transmitted, and each sampling reconstructs through an independent
    channel draw at one of the listed SNRs.
    """
    from . import codec as codec_mod
    from .link import LinkSeeds, transmit_symbols
    from .scenegen import confidence_map, generate_scene, true_similarity
    from .seeding import derive_seed
    from .tensors import apply_mask, importance_map, pack_nonzero, unpack

    queries = []
    for q in range(n_queries):
        scene, f = generate_scene(derive_seed(master_seed, "corpus-scene", q), scene_cfg, head)
        mask = importance_map(f, cr)
        f_ref = apply_mask(f, mask)
        packed = pack_nonzero(f, mask)
        ref_pooled = pool_map(confidence_map(f_ref, head).values, pool)
        symbols = codec_mod.encode(codec_obj, packed)
        samp, s_true = [], []
        for k, snr_db in enumerate(snr_list):
            seeds = LinkSeeds(
                pilot=derive_seed(master_seed, "corpus-pilot", q, k),
                channel=derive_seed(master_seed, "corpus-chan", q, k),
                noise=derive_seed(master_seed, "corpus-noise", q, k),
            )
            rx = transmit_symbols(
                symbols, ofdm_cfg, profile, snr_db, seeds, codec_obj.signal_power
            )
            f_hat = unpack(codec_mod.decode(codec_obj, rx), mask, f.shape)
            samp.append(pool_map(confidence_map(f_hat, head).values, pool))
            s_true.append(true_similarity(f_ref, f_hat, scene, head))
        queries.append(RankQuery(ref_pooled, np.stack(samp), np.asarray(s_true)))
    return RankCorpus(tuple(queries), pool)


def make_separable_corpus(
    head,
    scene_cfg,
    cr: float,
    n_queries: int,
    n_levels: int,
    master_seed: int,
    pool: int = 16,
    s_gap: float = 0.75,
) -> RankCorpus:
    """Synthetic corpus with a guaranteed similarity ladder.

    Samplings add feature noise over the whole tensor (synthesized
    reconstruction error, not restricted to the transmitted cells, so every
    confidence cell carries level information) with a scale that doubles per
    level after the clean level 0. Labels are equally spaced similarities
    (gap >= 0.5), so perfect ordering is achievable and held-out accuracy
    measures the scorer, not the labels.
    """
    from .scenegen import confidence_map, generate_scene
    from .seeding import derive_seed
    from .tensors import FeatureTensor, apply_mask, importance_map

    noise_scales = 0.5 * (2.0 ** np.arange(n_levels) - 1.0)  # level 0 stays clean
    queries = []
    for q in range(n_queries):
        scene, f = generate_scene(derive_seed(master_seed, "sep-scene", q), scene_cfg, head)
        mask = importance_map(f, cr)
        f_ref = apply_mask(f, mask)
        ref_pooled = pool_map(confidence_map(f_ref, head).values, pool)
        rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, "sep-noise", q)))
        samp, s_true = [], []
        for level, scale in enumerate(noise_scales):
            noisy = f_ref.data + scale * rng.standard_normal(f_ref.data.shape)
            samp.append(pool_map(confidence_map(FeatureTensor(noisy), head).values, pool))
            s_true.append(SIMILARITY_CAP - s_gap * level)
        queries.append(RankQuery(ref_pooled, np.stack(samp), np.asarray(s_true)))
    return RankCorpus(tuple(queries), pool)


_CORPUS_MAGIC = b"RKCP"
_SCORER_MAGIC = b"SCOR"


def save_corpus(path, corpus: RankCorpus) -> None:
    """Serialize pooled maps and similarity scores as little-endian float32."""
    import struct

    with open(path, "wb") as fh:
        fh.write(_CORPUS_MAGIC)
        fh.write(struct.pack("<II", len(corpus.queries), corpus.pool))
        for query in corpus.queries:
            fh.write(struct.pack("<I", query.s_true.size))
            fh.write(query.ref_pooled.astype("<f4").tobytes())
            fh.write(query.samp_pooled.astype("<f4").tobytes())
            fh.write(query.s_true.astype("<f4").tobytes())


def load_corpus(path) -> RankCorpus:
    """Inverse of save_corpus."""
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != _CORPUS_MAGIC:
            raise ValueError("not a rank-corpus file")
        n_queries, pool = struct.unpack("<II", fh.read(8))
        cell = pool * pool
        queries = []
        for _ in range(n_queries):
            (k,) = struct.unpack("<I", fh.read(4))
            ref = np.frombuffer(fh.read(4 * cell), dtype="<f4").astype(np.float64)
            samp = np.frombuffer(fh.read(4 * cell * k), dtype="<f4").astype(np.float64)
            s_true = np.frombuffer(fh.read(4 * k), dtype="<f4").astype(np.float64)
            if ref.size != cell or samp.size != cell * k or s_true.size != k:
                raise ValueError("truncated rank-corpus file")
            queries.append(
                RankQuery(ref.reshape(pool, pool), samp.reshape(k, pool, pool), s_true)
            )
    return RankCorpus(tuple(queries), pool)


def save_scorer(path, scorer: SimilarityScorer) -> None:
    import struct

    with open(path, "wb") as fh:
        fh.write(_SCORER_MAGIC)
        fh.write(struct.pack("<I", scorer.pool))
        nnkit.write_net(fh, scorer.branch)
        nnkit.write_net(fh, scorer.head)


def load_scorer(path) -> SimilarityScorer:
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != _SCORER_MAGIC:
            raise ValueError("not a scorer checkpoint")
        (pool,) = struct.unpack("<I", fh.read(4))
        branch = nnkit.read_net(fh)
        head = nnkit.read_net(fh)
    return SimilarityScorer(branch, head, pool)
