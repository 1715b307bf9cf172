"""Command-line front-end: stage tools, full pipeline, sweeps, simulator.

Exit codes: 0 on success, 1 if any recording failed, 2 for configuration
errors. Every option can also come from a flat ``key = value`` config file
passed with --config; explicit flags win over the file, the file wins over
built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import core, embeddings as emb, metrics, pipeline, plda, sim, vad, vbhmm
from .ahc import AhcConfig, ahc_cluster, relabel_first_occurrence
from .core import format_seconds

logger = logging.getLogger("diarkit")


class ConfigError(Exception):
    pass


def _atomic_write(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str | Path) -> str:
    return Path(path).read_text()


def _load_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    values: dict[str, str] = {}
    try:
        text = _read(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class Resolver:
    """Applies flag > config-file > default precedence."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values = _load_config_file(getattr(args, "config", None))

    def get(self, key: str, default, cast=float):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.file_values:
            try:
                return cast(self.file_values[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
        return default

    def get_list(self, key: str, default, cast=float):
        raw = getattr(self.args, key, None)
        if raw is None:
            raw = self.file_values.get(key)
        if raw is None:
            return default
        if isinstance(raw, str):
            parts = [p for p in raw.split(",") if p.strip()]
            return [cast(p) for p in parts]
        return list(raw)


def _bool_cast(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _vad_config(res: Resolver) -> vad.VadConfig:
    return vad.VadConfig(
        threshold=res.get("vad_threshold", 0.5),
        min_speech=res.get("min_speech", 0.2),
        max_intra_gap=res.get("max_gap", 0.5))


def _subseg_spec(res: Resolver) -> emb.SubsegmentSpec:
    return emb.SubsegmentSpec(
        window=res.get("window", 1.5),
        shift=res.get("shift", 0.75),
        min_subsegment=res.get("min_subsegment", 0.5))


def _ahc_config(res: Resolver, threshold: float | None = None) -> AhcConfig:
    return AhcConfig(
        threshold=res.get("ahc_threshold", 0.0) if threshold is None else threshold,
        min_clusters=res.get("min_clusters", 1, int),
        max_clusters=res.get("max_clusters", None, int))


def _vb_config(res: Resolver) -> vbhmm.VbhmmConfig:
    return vbhmm.VbhmmConfig(
        fa=res.get("fa", 0.3),
        fb=res.get("fb", 17.0),
        loop_p=res.get("loop_p", 0.99),
        max_iters=res.get("vb_iters", 40, int),
        elbo_eps=res.get("elbo_eps", 1e-6),
        min_occupancy=res.get("min_occupancy", 1e-3))


def _score_config(res: Resolver) -> metrics.ScoreConfig:
    uem_path = res.get("uem", None, str)
    uem = core.parse_uem(_read(uem_path)) if uem_path else None
    return metrics.ScoreConfig(
        collar=res.get("collar", 0.25),
        score_overlap=res.get("score_overlap", True, _bool_cast),
        uem=uem,
        collar_in_jer=res.get("jer_collar", False, _bool_cast))


def _load_model(res: Resolver) -> plda.PldaModel:
    """PLDA model file, or an identity model around a psi file when the
    embeddings are already in the scoring space."""
    model_path = res.get("plda_model", None, str)
    psi_path = res.get("psi", None, str)
    if model_path and psi_path:
        raise ConfigError("give either --plda-model or --psi, not both")
    if model_path:
        return plda.load_plda_model(_read(model_path))
    if psi_path:
        psi = np.array([float(v) for v in _read(psi_path).split()])
        return plda.PldaModel.identity(psi)
    raise ConfigError("one of --plda-model or --psi is required")


def _pipeline_config(res: Resolver, skip_vb: bool,
                     apply_preprocess: bool) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        vad=_vad_config(res), subseg=_subseg_spec(res), ahc=_ahc_config(res),
        vb=_vb_config(res), score=_score_config(res),
        skip_vb=skip_vb, apply_preprocess=apply_preprocess)


def _write_labels(path: str, recording_id: str, anchors, labels):
    lines = [f"{recording_id} {format_seconds(on)} {format_seconds(dur)} {lab}\n"
             for (on, dur), lab in zip(anchors, labels)]
    _atomic_write(path, "".join(lines))


def _read_labels(path: str) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for lineno, raw in enumerate(_read(path).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields")
        out.setdefault(fields[0], []).append(int(fields[3]))
    return out


def _report_text(report: metrics.ScoreReport) -> str:
    def rate(value):
        return "undefined" if value is None else f"{value:.6f}"

    lines = [f"fa {report.fa:.3f}\n",
             f"miss {report.miss:.3f}\n",
             f"error {report.error:.3f}\n",
             f"total {report.total:.3f}\n",
             f"der {rate(report.der)}\n",
             f"jer {rate(report.jer)}\n",
             f"n_speakers {report.n_speakers}\n"]
    for (rec, spk), value in sorted(report.per_speaker_jer.items()):
        lines.append(f"jer_spk {rec} {spk} {value:.6f}\n")
    for (rec, spk), hyp_spk in sorted(report.mapping.items()):
        lines.append(f"map {rec} {spk} {hyp_spk}\n")
    return "".join(lines)


def _print_score_table(report: metrics.ScoreReport):
    def pct(value):
        return "  undef" if value is None else f"{100 * value:6.2f}%"

    print("      fa     miss    error    total      DER      JER")
    print(f"{report.fa:8.3f} {report.miss:8.3f} {report.error:8.3f} "
          f"{report.total:8.3f}  {pct(report.der)}  {pct(report.jer)}")


# ---------------------------------------------------------------- commands


def _cmd_vad(args) -> int:
    res = Resolver(args)
    track = vad.parse_posteriors(_read(args.posteriors))
    segments = vad.run_vad(track, _vad_config(res))
    lines = []
    for tl in segments:
        span = tl.span_ms
        lines.append(f"{tl.recording_id} {format_seconds(span[0])} "
                     f"{format_seconds(span[1] - span[0])}\n")
    _atomic_write(args.out, "".join(lines))
    logger.info("wrote %d segments to %s", len(segments), args.out)
    return 0


def _cmd_subsegment(args) -> int:
    res = Resolver(args)
    spec = _subseg_spec(res)
    by_rec = emb.parse_anchors(_read(args.segments))
    lines = []
    for rec, spans in by_rec.items():
        anchors = emb.make_subsegments(
            [(on, on + dur) for on, dur in spans], spec)
        lines.append(emb.write_anchors(rec, anchors))
    _atomic_write(args.out, "".join(lines))
    return 0


def _bound_embeddings(args) -> tuple[str, emb.EmbeddingSet]:
    by_rec = emb.parse_anchors(_read(args.anchors))
    if len(by_rec) != 1:
        raise ValueError("anchor file must describe exactly one recording")
    rec, anchors = next(iter(by_rec.items()))
    return rec, emb.load_embeddings(rec, anchors, _read(args.embeddings))


def _cmd_cluster(args) -> int:
    res = Resolver(args)
    model = _load_model(res)
    rec, bound = _bound_embeddings(args)
    if args.plda_model:
        pre = plda.preprocess(bound, model)
    else:
        pre = plda.PreprocessedSet(rec, bound.anchors, bound.vectors)
    similarity = plda.similarity_matrix(pre, model)
    result = ahc_cluster(similarity, _ahc_config(res))
    _write_labels(args.out, rec, bound.anchors, result.labels)
    logger.info("clustered %d subsegments into %d clusters",
                len(result.labels), result.n_clusters)
    return 0


def _cmd_resegment(args) -> int:
    res = Resolver(args)
    model = _load_model(res)
    rec, bound = _bound_embeddings(args)
    if args.plda_model:
        pre = plda.preprocess(bound, model)
    else:
        pre = plda.PreprocessedSet(rec, bound.anchors, bound.vectors)
    labels = _read_labels(args.labels).get(rec)
    if labels is None:
        raise ValueError(f"label file has no entries for recording {rec!r}")
    init = relabel_first_occurrence(labels)
    final, state = vbhmm.vb_resegment(pre, model.psi, init, _vb_config(res))
    _write_labels(args.out, rec, bound.anchors, final.labels)
    if args.elbo_csv:
        rows = "iteration,elbo\n" + "".join(
            f"{i},{v:.9f}\n" for i, v in enumerate(state.elbo_trace))
        _atomic_write(args.elbo_csv, rows)
    logger.info("refined to %d speakers in %d iterations",
                final.n_clusters, state.n_iters)
    return 0


def _cmd_score(args) -> int:
    res = Resolver(args)
    ref = core.parse_rttm(_read(args.ref))
    hyp = core.parse_rttm(_read(args.hyp))
    report = metrics.score(ref, hyp, _score_config(res))
    _print_score_table(report)
    if args.report:
        _atomic_write(args.report, _report_text(report))
    return 0


def _cmd_simulate(args) -> int:
    res = Resolver(args)
    cfg = sim.SimConfig(
        n_speakers=res.get("n_speakers", 4, int),
        duration=res.get("duration", 300.0),
        mean_turn=res.get("mean_turn", 3.0),
        mean_pause=res.get("mean_pause", 0.4),
        p_long_pause=res.get("p_long_pause", 0.1),
        embedding_dim=res.get("embedding_dim", 32, int),
        psi=res.get("psi_value", 100.0),
        posterior_noise=res.get("posterior_noise", 0.1),
        seed=res.get("seed", 0, int),
        frame_step=res.get("frame_step", 0.01))
    result = sim.simulate(cfg)
    out = Path(args.out_dir)
    _atomic_write(out / "ref.rttm", core.write_rttm(result.reference))
    _atomic_write(out / "posteriors.txt", vad.write_posteriors(result.track))
    _atomic_write(out / "anchors.txt",
                  emb.write_anchors(result.recording_id,
                                    list(result.embeddings.anchors)))
    _atomic_write(out / "embeddings.txt",
                  emb.write_embedding_matrix(result.embeddings.vectors))
    _atomic_write(out / "psi.txt",
                  "".join(f"{v:.17g}\n" for v in result.psi))
    _atomic_write(out / "world.json", sim.save_world(result))
    logger.info("simulated %s: %d turns, %d anchors", result.recording_id,
                len(result.reference), result.embeddings.n)
    return 0


def _run_one_recording(posteriors_path: str, embeddings_path: str,
                       model: plda.PldaModel, cfg: pipeline.PipelineConfig
                       ) -> pipeline.PipelineResult:
    track = vad.parse_posteriors(_read(posteriors_path))
    anchors = pipeline.compute_anchors(track, cfg)
    bound = emb.load_embeddings(track.recording_id, anchors,
                                _read(embeddings_path))
    return pipeline.diarize_recording(track, bound, model, cfg)


def _cmd_pipeline(args) -> int:
    res = Resolver(args)
    model = _load_model(res)
    cfg = _pipeline_config(res, skip_vb=bool(args.skip_vb),
                           apply_preprocess=bool(args.plda_model))
    pairs: list[tuple[str, str]] = []
    if args.manifest:
        base = Path(args.manifest).parent
        for lineno, raw in enumerate(_read(args.manifest).splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ConfigError(
                    f"{args.manifest}:{lineno}: expected 'posteriors embeddings'")
            pairs.append((str(base / fields[0]), str(base / fields[1])))
    elif args.posteriors and args.embeddings:
        pairs.append((args.posteriors, args.embeddings))
    else:
        raise ConfigError("need --posteriors and --embeddings, or --manifest")

    all_turns = []
    failures = 0
    for post_path, emb_path in pairs:
        try:
            result = _run_one_recording(post_path, emb_path, model, cfg)
        except Exception as exc:
            failures += 1
            logger.error("recording %s failed: %s", post_path, exc)
            continue
        all_turns.extend(result.hypothesis.turns)
    hypothesis = core.Annotation.from_turns(all_turns)
    _atomic_write(args.out_rttm, core.write_rttm(hypothesis))
    logger.info("wrote hypothesis for %d recording(s) to %s",
                len(pairs) - failures, args.out_rttm)

    if args.ref:
        ref = core.parse_rttm(_read(args.ref))
        report = metrics.score(ref, hypothesis, cfg.score)
        _print_score_table(report)
        if args.report:
            _atomic_write(args.report, _report_text(report))
    return 1 if failures else 0


def _cmd_sweep(args) -> int:
    res = Resolver(args)
    vad_thresholds = res.get_list("vad_thresholds", None)
    ahc_thresholds = res.get_list("ahc_thresholds", [0.0])
    if not vad_thresholds or not ahc_thresholds:
        raise ConfigError("sweep lists must be non-empty "
                          "(--vad-thresholds and --ahc-thresholds)")

    world = sim.load_world(_read(args.world)) if args.world else None
    if world is not None:
        ref = world.reference
        model = plda.PldaModel.identity(world.psi)
        apply_pre = False
    else:
        if not (args.posteriors and args.embeddings and args.ref):
            raise ConfigError(
                "sweep needs --world, or --posteriors/--embeddings/--ref")
        ref = core.parse_rttm(_read(args.ref))
        model = _load_model(res)
        apply_pre = bool(args.plda_model)

    rows = []
    for vad_thr in vad_thresholds:
        for ahc_thr in ahc_thresholds:
            cfg = pipeline.PipelineConfig(
                vad=vad.VadConfig(threshold=vad_thr,
                                  min_speech=res.get("min_speech", 0.2),
                                  max_intra_gap=res.get("max_gap", 0.5)),
                subseg=_subseg_spec(res),
                ahc=_ahc_config(res, threshold=ahc_thr),
                vb=_vb_config(res),
                score=_score_config(res),
                skip_vb=bool(args.skip_vb),
                apply_preprocess=apply_pre)
            if world is not None:
                anchors = pipeline.compute_anchors(world.track, cfg)
                bound, _ = sim.embeddings_for_anchors(world, anchors)
                result = pipeline.diarize_recording(world.track, bound,
                                                    model, cfg)
            else:
                result = _run_one_recording(args.posteriors, args.embeddings,
                                            model, cfg)
            report = metrics.score(ref, result.hypothesis, cfg.score)
            rows.append((vad_thr, ahc_thr, report))
            logger.info("sweep vad=%.2f ahc=%.2f -> DER %s", vad_thr, ahc_thr,
                        "undef" if report.der is None else f"{report.der:.4f}")

    buf = []
    writer_target = buf.append
    header = "vad_threshold,ahc_threshold,der,jer,fa,miss,error,total\n"
    writer_target(header)
    for vad_thr, ahc_thr, report in rows:
        der = "nan" if report.der is None else f"{report.der:.6f}"
        jer = "nan" if report.jer is None else f"{report.jer:.6f}"
        writer_target(f"{vad_thr},{ahc_thr},{der},{jer},{report.fa:.3f},"
                      f"{report.miss:.3f},{report.error:.3f},{report.total:.3f}\n")
    _atomic_write(args.out_csv, "".join(buf))
    logger.info("wrote %d sweep rows to %s", len(rows), args.out_csv)
    return 0


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")


def _add_vad_flags(p: argparse.ArgumentParser):
    p.add_argument("--vad-threshold", type=float)
    p.add_argument("--min-speech", type=float)
    p.add_argument("--max-gap", type=float)


def _add_subseg_flags(p: argparse.ArgumentParser):
    p.add_argument("--window", type=float)
    p.add_argument("--shift", type=float)
    p.add_argument("--min-subsegment", type=float)


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--plda-model", help="PLDA model file")
    p.add_argument("--psi", help="psi file for embeddings already in scoring space")


def _add_ahc_flags(p: argparse.ArgumentParser):
    p.add_argument("--ahc-threshold", type=float)
    p.add_argument("--min-clusters", type=int)
    p.add_argument("--max-clusters", type=int)


def _add_vb_flags(p: argparse.ArgumentParser):
    p.add_argument("--fa", type=float)
    p.add_argument("--fb", type=float)
    p.add_argument("--loop-p", type=float)
    p.add_argument("--vb-iters", type=int)
    p.add_argument("--min-occupancy", type=float)


def _add_score_flags(p: argparse.ArgumentParser):
    p.add_argument("--uem")
    p.add_argument("--collar", type=float)
    p.add_argument("--score-overlap", type=_bool_cast)
    p.add_argument("--jer-collar", type=_bool_cast)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diarkit",
        description="Speaker diarization back-end tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vad", help="posteriors -> speech segments")
    _add_common(p)
    _add_vad_flags(p)
    p.add_argument("--posteriors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vad)

    p = sub.add_parser("subsegment", help="segments -> sliding-window anchors")
    _add_common(p)
    _add_subseg_flags(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_subsegment)

    p = sub.add_parser("cluster", help="embeddings -> initial clusters")
    _add_common(p)
    _add_model_flags(p)
    _add_ahc_flags(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("resegment", help="refine clusters with the VB-HMM")
    _add_common(p)
    _add_model_flags(p)
    _add_vb_flags(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--elbo-csv")
    p.set_defaults(func=_cmd_resegment)

    p = sub.add_parser("score", help="DER/JER of a hypothesis vs a reference")
    _add_common(p)
    _add_score_flags(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--report", help="write machine-readable report here")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("simulate", help="generate a synthetic recording")
    _add_common(p)
    p.add_argument("--n-speakers", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--mean-turn", type=float)
    p.add_argument("--mean-pause", type=float)
    p.add_argument("--p-long-pause", type=float)
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--psi-value", type=float)
    p.add_argument("--posterior-noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--frame-step", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("pipeline", help="posteriors + embeddings -> RTTM")
    _add_common(p)
    _add_vad_flags(p)
    _add_subseg_flags(p)
    _add_model_flags(p)
    _add_ahc_flags(p)
    _add_vb_flags(p)
    _add_score_flags(p)
    p.add_argument("--posteriors")
    p.add_argument("--embeddings")
    p.add_argument("--manifest", help="file of 'posteriors embeddings' lines")
    p.add_argument("--out-rttm", required=True)
    p.add_argument("--ref", help="reference RTTM to score against")
    p.add_argument("--report")
    p.add_argument("--skip-vb", action="store_true",
                   help="stop after agglomerative clustering")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep", help="score a grid of VAD/AHC thresholds")
    _add_common(p)
    _add_vad_flags(p)
    _add_subseg_flags(p)
    _add_model_flags(p)
    _add_vb_flags(p)
    _add_score_flags(p)
    p.add_argument("--vad-thresholds", help="comma-separated list")
    p.add_argument("--ahc-thresholds", help="comma-separated list")
    p.add_argument("--world", help="simulation world.json (regenerates "
                                   "embeddings per configuration)")
    p.add_argument("--posteriors")
    p.add_argument("--embeddings")
    p.add_argument("--ref")
    p.add_argument("--skip-vb", action="store_true")
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return 2
    except Exception as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
