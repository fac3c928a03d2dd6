"""Experiment harness: training orchestration, seeded session sweeps, goldens.

Everything here is deterministic in the master seed.  Session seeds are
derived per session index and round, never from the mode, SNR or threshold,
so protocol variants see identical channel and noise draws and sweep CSVs
are byte-identical regardless of the worker count.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import codec as codec_mod
from . import detector as det_mod
from .config import ExperimentConfig
from .harq import (
    BaselineSessionCtx,
    HarqSession,
    RepetitionCode,
    finalize,
    make_baseline_payload,
    run_baseline_session,
    run_semantic_session,
    SemanticSessionCtx,
)
from .link import LinkSeeds, transmit_symbols, transmit_with_state
from .scenegen import ProxyHead, generate_scene, perception_loss
from .seeding import derive_seed
from .tensors import apply_mask, importance_map, pack_nonzero, unpack

SEMANTIC_MODES = ("noharq", "sim1", "sim2")
BASELINE_MODES = ("base1", "base2")

CODEC_PAIR1 = "codec_pair1.ckpt"
CODEC_PAIR2 = "codec_pair2.ckpt"
SCORER = "scorer.ckpt"
CORPUS = "corpus.bin"


@dataclass
class RuntimeBundle:
    """Trained artifacts plus derived configs, ready to run sessions.

    Pair 1 carries every first transmission (and is the whole pipeline for
    no-HARQ and resend mode); pair 2 only ever sends the low-SNR correction.
    """

    cfg: ExperimentConfig
    head: ProxyHead
    codec_pair1: codec_mod.SemanticCodec
    codec_pair2: codec_mod.SemanticCodec
    scorer: det_mod.SimilarityScorer


@dataclass(frozen=True)
class SessionRecord:
    """One protocol session flattened for CSV output."""

    session_id: int
    mode: str
    snr_db: float
    beta: float | None  # None for CRC-acknowledged modes
    rounds_used: int
    ack_round: int  # 0 when never acknowledged
    final_round: int
    final_s_true: float
    final_task_loss: float
    s_hat: tuple  # per round, None where unscored or unused
    s_true: tuple


# ---------------------------------------------------------------------------
# training


def build_training_set(cfg: ExperimentConfig, head: ProxyHead) -> codec_mod.TrainingSet:
    scene_cfg = cfg.scene_config()
    n = cfg.codec.train_samples
    packed = np.empty((n, cfg.packed_length()), dtype=np.float64)
    scenes, masks = [], []
    shape = (scene_cfg.channels, scene_cfg.height, scene_cfg.width)
    for i in range(n):
        seed = derive_seed(cfg.experiment.master_seed, "train-scene", i)
        scene, f = generate_scene(seed, scene_cfg, head)
        mask = importance_map(f, cfg.codec.cr)
        packed[i] = pack_nonzero(f, mask)
        scenes.append(scene)
        masks.append(mask)
    return codec_mod.TrainingSet(packed, tuple(scenes), tuple(masks), shape, head)


def make_head(cfg: ExperimentConfig) -> ProxyHead:
    return ProxyHead.from_seed(
        derive_seed(cfg.experiment.master_seed, "head"), cfg.scene.channels
    )


def train_all(cfg: ExperimentConfig, out_dir, log=None) -> RuntimeBundle:
    """Train the codecs and the similarity scorer; write checkpoints and curves."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = log if log is not None else (lambda msg: None)
    ms = cfg.experiment.master_seed

    head = make_head(cfg)
    say("building training scenes")
    tset = build_training_set(cfg, head)
    codec_cfg = cfg.codec_config()

    say("training first codec pair")
    c_p1, curve_p1 = codec_mod.train_no_harq(
        tset, codec_cfg, cfg.train_config(derive_seed(ms, "codec-pair1"), cfg.codec_pair1)
    )
    say("training second codec pair on the frozen residual")
    c_p2, curve_p2 = codec_mod.train_harq2_pair(
        c_p1, tset, codec_cfg, cfg.train_config(derive_seed(ms, "codec-pair2"), cfg.codec_pair2)
    )
    codec_mod.save_codec(out / CODEC_PAIR1, c_p1)
    codec_mod.save_codec(out / CODEC_PAIR2, c_p2)
    _write_codec_curves(
        out / "train_codecs.csv",
        (("pair1", curve_p1), ("pair2", curve_p2)),
    )

    say("building detector corpus over the full link")
    corpus = det_mod.build_corpus(
        head,
        cfg.scene_config(),
        cfg.codec.cr,
        c_p1,
        cfg.ofdm_config(),
        cfg.channel_profile(),
        cfg.detector.corpus_snr_db,
        cfg.detector.corpus_queries,
        derive_seed(ms, "corpus"),
        cfg.detector.pool,
    )
    det_mod.save_corpus(out / CORPUS, corpus)
    say("training similarity scorer")
    scorer = det_mod.new_scorer(cfg.detector_config(), derive_seed(ms, "scorer"))
    scorer, history = det_mod.train_ranker(corpus, scorer, cfg.rank_train_config(derive_seed(ms, "ranker")))
    scorer = det_mod.calibrate_scorer(scorer, corpus)
    det_mod.save_scorer(out / SCORER, scorer)
    _write_detector_curve(out / "train_detector.csv", history)
    _write_calibration(out / "detector_calibration.csv", cfg, corpus, scorer)

    say("training artifacts written")
    return RuntimeBundle(cfg, head, c_p1, c_p2, scorer)


def load_bundle(cfg: ExperimentConfig, art_dir) -> RuntimeBundle:
    art = Path(art_dir)
    missing = [n for n in (CODEC_PAIR1, CODEC_PAIR2, SCORER) if not (art / n).exists()]
    if missing:
        raise ValueError(f"missing training artifacts in {art}: {', '.join(missing)}")
    bundle = RuntimeBundle(
        cfg,
        make_head(cfg),
        codec_mod.load_codec(art / CODEC_PAIR1),
        codec_mod.load_codec(art / CODEC_PAIR2),
        det_mod.load_scorer(art / SCORER),
    )
    if bundle.codec_pair1.n_in != cfg.packed_length():
        raise ValueError(
            "artifacts do not match config: codec width "
            f"{bundle.codec_pair1.n_in} vs packed length {cfg.packed_length()}"
        )
    if bundle.scorer.pool != cfg.detector.pool:
        raise ValueError("artifacts do not match config: scorer pooling size")
    return bundle


def _write_codec_curves(path, named_curves) -> None:
    rows = []
    for name, curve in named_curves:
        for phase, series in (("recon", curve.recon), ("total", curve.total), ("task", curve.task)):
            for epoch, loss in enumerate(series, start=1):
                rows.append(f"{name},{phase},{epoch},{_fmt(loss)}")
    _write_lines(path, ["codec,phase,epoch,loss"] + rows)


def _write_detector_curve(path, history) -> None:
    rows = [
        f"{epoch},{_fmt(pl)},{_fmt(acc)}"
        for epoch, (pl, acc) in enumerate(
            zip(history["pair_loss"], history["holdout_accuracy"]), start=1
        )
    ]
    _write_lines(path, ["epoch,pair_loss,holdout_accuracy"] + rows)


def _write_calibration(path, cfg: ExperimentConfig, corpus, scorer) -> None:
    """Per corpus SNR: mean predicted score vs mean true similarity.

    This is the table used to place the acknowledgement threshold between
    the scores of reliable and unreliable receptions.
    """
    snrs = cfg.detector.corpus_snr_db
    n = len(snrs)
    s_hat = np.zeros(n)
    s_true = np.zeros(n)
    count = 0
    for query in corpus.queries:
        if query.s_true.size != n:
            continue
        s_hat += det_mod.query_scores(scorer, query)
        s_true += query.s_true
        count += 1
    rows = []
    if count:
        s_hat /= count
        s_true /= count
        rows = [
            f"{_fmt(snr)},{_fmt(sh)},{_fmt(st)}"
            for snr, sh, st in zip(snrs, s_hat, s_true)
        ]
    _write_lines(path, ["snr_db,mean_score,mean_true_similarity"] + rows)


# ---------------------------------------------------------------------------
# sessions


def _session_seeds(ms: int, idx: int, t: int) -> LinkSeeds:
    """Round seeds shared by every mode, SNR and threshold for pairing."""
    return LinkSeeds(
        pilot=derive_seed(ms, "session-pilot", idx, t),
        channel=derive_seed(ms, "session-chan", idx, t),
        noise=derive_seed(ms, "session-noise", idx, t),
    )


def run_session(
    bundle: RuntimeBundle,
    mode: str,
    snr_db: float,
    idx: int,
    beta: float | None = None,
    budget: int | None = None,
) -> SessionRecord:
    """Run one seeded protocol session and flatten it into a record."""
    cfg = bundle.cfg
    ms = cfg.experiment.master_seed
    budget = cfg.experiment.round_budget if budget is None else budget
    ofdm_cfg = cfg.ofdm_config()
    profile = cfg.channel_profile()
    scene_cfg = cfg.scene_config()
    scene, f = generate_scene(derive_seed(ms, "session-scene", idx), scene_cfg, bundle.head)

    if mode in SEMANTIC_MODES:
        det_cfg = cfg.detector_config()
        if beta is not None:
            det_cfg = replace(det_cfg, ack_threshold=beta)
        mask = importance_map(f, cfg.codec.cr)
        f_ref = apply_mask(f, mask)
        packed = pack_nonzero(f, mask)
        first = bundle.codec_pair1
        second = bundle.codec_pair2 if mode == "sim2" else None
        ctx = SemanticSessionCtx(
            first, second, bundle.scorer, det_cfg, bundle.head,
            scene, mask, f.shape, f_ref, packed,
        )

        def transmit(t, symbols):
            return transmit_symbols(
                symbols, ofdm_cfg, profile, snr_db, _session_seeds(ms, idx, t),
                first.signal_power,
            )

        proto = "sim1" if mode == "noharq" else mode
        session = run_semantic_session(ctx, proto, 1 if mode == "noharq" else budget, transmit)
        used_beta = det_cfg.ack_threshold
    elif mode in BASELINE_MODES:
        mask = importance_map(f, cfg.baseline_cr())
        packed = pack_nonzero(f, mask)
        quant, payload_bits = make_baseline_payload(packed)
        f_ref = unpack(quant.dequantize(quant.quantize(packed)), mask, f.shape)
        ctx = BaselineSessionCtx(
            cfg.baseline.mod_order,
            RepetitionCode(cfg.baseline.code_copies),
            quant, payload_bits, bundle.head, scene, mask, f.shape, f_ref,
        )

        def transmit(t, symbols):
            return transmit_with_state(
                symbols, ofdm_cfg, profile, snr_db, _session_seeds(ms, idx, t)
            )

        session = run_baseline_session(ctx, mode, budget, transmit)
        used_beta = None
    else:
        raise ValueError(f"unknown mode {mode!r}")

    return _flatten(session, bundle, scene, idx, mode, snr_db, used_beta, budget)


def _flatten(
    session: HarqSession, bundle, scene, idx, mode, snr_db, beta, budget
) -> SessionRecord:
    final_round, candidate = finalize(session)
    task_loss = perception_loss(candidate, scene, bundle.head)
    s_hat = tuple(
        session.rounds[t].s_hat if t < session.rounds_used else None for t in range(budget)
    )
    s_true = tuple(
        session.rounds[t].s_true if t < session.rounds_used else None for t in range(budget)
    )
    return SessionRecord(
        session_id=idx,
        mode=mode,
        snr_db=float(snr_db),
        beta=beta,
        rounds_used=session.rounds_used,
        ack_round=session.ack_round,
        final_round=final_round,
        final_s_true=float(session.rounds[final_round - 1].s_true),
        final_task_loss=float(task_loss),
        s_hat=s_hat,
        s_true=s_true,
    )


# ---------------------------------------------------------------------------
# sweeps

_WORKER_STATE: dict = {}


def _pool_init(bundle, beta, budget):
    _WORKER_STATE["args"] = (bundle, beta, budget)


def _pool_task(task):
    mode, snr_db, idx = task
    bundle, beta, budget = _WORKER_STATE["args"]
    return run_session(bundle, mode, snr_db, idx, beta=beta, budget=budget)


def run_sweep(
    bundle: RuntimeBundle,
    modes,
    snr_list,
    out_dir,
    sessions: int | None = None,
    beta: float | None = None,
    budget: int | None = None,
    workers: int | None = None,
    log=None,
) -> list[SessionRecord]:
    """Run a mode x SNR grid of seeded sessions and write the two sweep CSVs.

    The task list and aggregation order are fixed, and per-session seeds do
    not depend on how tasks are distributed, so the CSV bytes are identical
    for any worker count.
    """
    cfg = bundle.cfg
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = log if log is not None else (lambda msg: None)
    sessions = cfg.experiment.sessions if sessions is None else sessions
    workers = cfg.experiment.workers if workers is None else workers
    budget_eff = cfg.experiment.round_budget if budget is None else budget
    modes = tuple(modes)
    snr_list = tuple(float(s) for s in snr_list)

    tasks = [
        (mode, snr_db, idx)
        for mode in modes
        for snr_db in snr_list
        for idx in range(sessions)
    ]
    say(f"running {len(tasks)} sessions on {workers} worker(s)")
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_pool_init, initargs=(bundle, beta, budget)) as pool:
            records = pool.map(_pool_task, tasks, chunksize=8)
    else:
        records = [
            run_session(bundle, mode, snr_db, idx, beta=beta, budget=budget)
            for mode, snr_db, idx in tasks
        ]

    write_session_csv(out / "sessions.csv", records, budget_eff)
    write_summary_csv(out / "summary.csv", records, modes, snr_list, budget_eff)
    (out / "plot_summary.py").write_text(_PLOT_SCRIPT, encoding="utf-8")
    say(f"wrote {out / 'sessions.csv'} and {out / 'summary.csv'}")
    return records


def write_session_csv(path, records, budget: int) -> None:
    head = ["session_id", "mode", "snr_db", "beta", "rounds_used", "ack_round",
            "final_round", "final_s_true", "final_task_loss"]
    head += [f"s_hat_{t}" for t in range(1, budget + 1)]
    head += [f"s_true_{t}" for t in range(1, budget + 1)]
    rows = []
    for r in records:
        cells = [str(r.session_id), r.mode, _fmt(r.snr_db), _fmt(r.beta),
                 str(r.rounds_used), str(r.ack_round), str(r.final_round),
                 _fmt(r.final_s_true), _fmt(r.final_task_loss)]
        cells += [_fmt(v) for v in _pad(r.s_hat, budget)]
        cells += [_fmt(v) for v in _pad(r.s_true, budget)]
        rows.append(",".join(cells))
    _write_lines(path, [",".join(head)] + rows)


def write_summary_csv(path, records, modes, snr_list, budget: int) -> None:
    head = ["mode", "snr_db", "beta", "sessions", "ack_rate", "throughput",
            "mean_rounds", "mean_final_s", "mean_task_loss"]
    head += [f"rounds_{t}" for t in range(1, budget + 1)]
    rows = []
    for mode in modes:
        for snr_db in snr_list:
            group = [r for r in records if r.mode == mode and r.snr_db == snr_db]
            if not group:
                continue
            rows.append(",".join(_summary_cells(mode, snr_db, group, budget)))
    _write_lines(path, [",".join(head)] + rows)


def _summary_cells(mode, snr_db, group, budget: int) -> list[str]:
    n = len(group)
    total_rounds = sum(r.rounds_used for r in group)
    acked = sum(1 for r in group if r.ack_round > 0)
    tput = acked / total_rounds if total_rounds else float("nan")
    betas = {r.beta for r in group}
    beta = betas.pop() if len(betas) == 1 else None
    cells = [
        mode, _fmt(snr_db), _fmt(beta), str(n),
        _fmt(acked / n),
        _fmt(tput),
        _fmt(total_rounds / n),
        _fmt(sum(r.final_s_true for r in group) / n),
        _fmt(sum(r.final_task_loss for r in group) / n),
    ]
    for t in range(1, budget + 1):
        cells.append(str(sum(1 for r in group if r.rounds_used == t)))
    return cells


def _pad(values, budget: int) -> list:
    out = list(values)[:budget]
    out += [None] * (budget - len(out))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return format(value, ".10g")


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_PLOT_SCRIPT = '''"""Plot a sweep summary CSV (throughput and similarity vs SNR per mode)."""

import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(path="summary.csv", out="summary.png"):
    series = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            series[row["mode"]].append(row)
    fig, (ax_t, ax_s) = plt.subplots(1, 2, figsize=(11, 4.2))
    for mode, rows in sorted(series.items()):
        rows.sort(key=lambda r: float(r["snr_db"]))
        snr = [float(r["snr_db"]) for r in rows]
        tput = [float(r["throughput"]) if r["throughput"] else float("nan") for r in rows]
        sim = [float(r["mean_final_s"]) for r in rows]
        ax_t.plot(snr, tput, marker="o", label=mode)
        ax_s.plot(snr, sim, marker="o", label=mode)
    ax_t.set_xlabel("SNR (dB)")
    ax_t.set_ylabel("throughput (acks per round)")
    ax_t.grid(True, alpha=0.3)
    ax_t.legend()
    ax_s.set_xlabel("SNR (dB)")
    ax_s.set_ylabel("mean final similarity")
    ax_s.grid(True, alpha=0.3)
    ax_s.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
'''


# ---------------------------------------------------------------------------
# goldens


def run_goldens(out_dir=None) -> list[tuple[str, bool, str]]:
    """Fast self-checks of the numeric core against closed-form oracles."""
    results = [
        ("ofdm_round_trip", *_golden_ofdm()),
        ("channel_response", *_golden_channel()),
        ("noiseless_estimation", *_golden_estimation()),
        ("crc_residue", *_golden_crc()),
        ("quantizer_bound", *_golden_quantizer()),
        ("rank_gradients", *_golden_lambda()),
        ("chase_combining", *_golden_chase()),
        ("qam_round_trip", *_golden_qam()),
    ]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [
            f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in results
        ]
        _write_lines(out / "goldens_report.txt", lines)
    return results


def _golden_ofdm():
    from . import ofdm

    cfg = ExperimentConfig().ofdm_config()
    rng = np.random.Generator(np.random.PCG64(7))
    payload = (rng.standard_normal(cfg.payload_capacity) +
               1j * rng.standard_normal(cfg.payload_capacity)) / np.sqrt(2.0)
    grid = ofdm.frame_build(payload, cfg, pilot_seed=3)
    back = ofdm.from_time(ofdm.to_time(grid.grid, cfg), cfg)
    err = float(np.max(np.abs(back - grid.grid)))
    t = ofdm.to_time(grid.grid, cfg)[:, cfg.l_cp:]
    parseval = float(np.max(np.abs(
        np.sum(np.abs(t) ** 2, axis=1) - np.sum(np.abs(grid.grid) ** 2, axis=1)
    )))
    ok = err < 1e-9 and parseval < 1e-9
    return ok, f"round trip {err:.2e}, energy mismatch {parseval:.2e}"


def _golden_channel():
    from . import channel

    cfg = ExperimentConfig().ofdm_config()
    profile = ExperimentConfig().channel_profile()
    real = channel.realize(profile, cfg, 4, seed=11)
    h = channel.freq_response(real, cfg)
    rng = np.random.Generator(np.random.PCG64(5))
    worst = 0.0
    for _ in range(32):
        j = int(rng.integers(0, 4))
        k = int(rng.integers(0, cfg.l_fft))
        direct = sum(
            real.taps[j, m] * np.exp(-2j * np.pi * k * cfg.subcarrier_spacing * real.delays[m])
            for m in range(real.delays.size)
        )
        worst = max(worst, abs(h[j, k] - direct))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def _golden_estimation():
    from . import channel, ofdm, rxdsp
    from .channel import default_profile

    cfg = ExperimentConfig().ofdm_config()
    rng = np.random.Generator(np.random.PCG64(13))
    payload = (rng.standard_normal(64) + 1j * rng.standard_normal(64)) / np.sqrt(2.0)
    grid = ofdm.frame_build(payload, cfg, pilot_seed=1)
    # frequency-flat and static, the one case with no interpolation residual
    profile = default_profile(speed_kmh=0.0, n_taps=1)
    real = channel.realize(profile, cfg, cfg.n_symbols, seed=2)
    rx = channel.apply(grid.grid, real, cfg, snr_db=None)
    pilots = ofdm.pilot_rows(cfg, 1)
    est = rxdsp.estimate(rx, pilots, cfg, noise_var=0.0)
    err = float(np.max(np.abs(est.h - channel.freq_response(real, cfg))))
    return err < 1e-9, f"static-channel estimate error {err:.2e}"


def _golden_crc():
    from .harq import append_crc24, bytes_to_bits, crc24, verify_crc24

    word = bytes_to_bits(np.frombuffer(bytes([0xDE, 0xAD, 0xBE, 0xEF]), dtype=np.uint8))
    value = crc24(word)
    ok = value == 0x6432C5 and verify_crc24(append_crc24(word)) and crc24(np.zeros(64, dtype=np.uint8)) == 0
    return ok, f"checksum 0x{value:06X}"


def _golden_quantizer():
    from .harq import fit_quantizer

    rng = np.random.Generator(np.random.PCG64(17))
    values = rng.standard_normal(512) * 3.0
    quant = fit_quantizer(values)
    err = float(np.max(np.abs(quant.dequantize(quant.quantize(values)) - values)))
    bound = quant.scale / 2.0 + 1e-12
    return err <= bound, f"max error {err:.3e} vs half step {bound:.3e}"


def _golden_lambda():
    from .detector import lambda_gradients, pair_loss

    rng = np.random.Generator(np.random.PCG64(19))
    s_hat = rng.standard_normal(6)
    s_true = rng.standard_normal(6)
    lam = lambda_gradients(s_hat, s_true)
    eps = 1e-6
    worst = 0.0
    for i in range(6):
        bumped = s_hat.copy()
        bumped[i] += eps
        down = s_hat.copy()
        down[i] -= eps
        fd = (_rank_loss(bumped, s_true, pair_loss) - _rank_loss(down, s_true, pair_loss)) / (2 * eps)
        worst = max(worst, abs(fd - lam[i]))
    total = abs(float(lam.sum()))
    return worst < 1e-6 and total < 1e-12, f"fd gap {worst:.2e}, gradient sum {total:.2e}"


def _rank_loss(s_hat, s_true, pair_loss) -> float:
    total = 0.0
    for m in range(s_true.size):
        for n in range(s_true.size):
            if s_true[m] > s_true[n]:
                total += float(pair_loss(s_hat[m], s_hat[n], 1))
    return total


def _golden_chase():
    from .harq import ChaseCombiner

    rng = np.random.Generator(np.random.PCG64(23))
    x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    comb = ChaseCombiner(32)
    agg = np.zeros(32, dtype=np.complex128)
    wsum = np.zeros(32)
    for copy in range(3):
        h = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        nv = 0.5 + copy
        comb.add(x, h, nv)
        w = np.abs(h) ** 2 / nv
        agg += w * x
        wsum += w
    err = float(np.max(np.abs(comb.combined() - agg / wsum)))
    return err < 1e-12, f"weighted average deviation {err:.2e}"


def _golden_qam():
    from .ofdm import QAM_ORDERS, qam_demap_hard, qam_map

    rng = np.random.Generator(np.random.PCG64(29))
    for order in QAM_ORDERS:
        bps = int(math.log2(order))
        bits = rng.integers(0, 2, size=bps * 64).astype(np.uint8)
        sym = qam_map(bits, order)
        power = float(np.mean(np.abs(qam_map(_all_words(bps), order)) ** 2))
        if not np.array_equal(qam_demap_hard(sym, order), bits) or abs(power - 1.0) > 1e-12:
            return False, f"order {order} failed"
    return True, "all constellation orders invert and have unit mean energy"


def _all_words(bps: int) -> np.ndarray:
    count = 2 ** bps
    words = ((np.arange(count)[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)
    return words.reshape(-1)


# ---------------------------------------------------------------------------
# corpus command


def build_and_save_corpus(cfg: ExperimentConfig, art_dir, out_dir, log=None) -> Path:
    """Standalone corpus build from trained codec artifacts."""
    say = log if log is not None else (lambda msg: None)
    art = Path(art_dir)
    if not (art / CODEC_PAIR1).exists():
        raise ValueError(f"missing training artifacts in {art}: {CODEC_PAIR1}")
    codec_obj = codec_mod.load_codec(art / CODEC_PAIR1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say("building detector corpus over the full link")
    corpus = det_mod.build_corpus(
        make_head(cfg),
        cfg.scene_config(),
        cfg.codec.cr,
        codec_obj,
        cfg.ofdm_config(),
        cfg.channel_profile(),
        cfg.detector.corpus_snr_db,
        cfg.detector.corpus_queries,
        derive_seed(cfg.experiment.master_seed, "corpus"),
        cfg.detector.pool,
    )
    path = out / CORPUS
    det_mod.save_corpus(path, corpus)
    stats = [
        f"{len(corpus.queries)} queries, {corpus.queries[0].s_true.size} samplings each"
    ]
    _write_lines(out / "corpus_stats.txt", stats)
    say(f"wrote {path}")
    return path
