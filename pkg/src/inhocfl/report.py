"""Experiment configs, run artifacts and run comparison.

A run directory holds::

    rounds.csv          one row per (round, slice)
    attributions.csv    attributions of each final global model on its test split
    attribution_summary.json
    timing.csv          cumulative wall time up to the convergence round
    summary.json        held-out loss and confidence per slice
    manifest.json       everything needed to rerun

All files are written to a temporary name and renamed into place.
"""

import csv
import dataclasses
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__, attribution, datagen
from .federation import FederationConfig, RoundTrace, build_datasets, run_federation

MANIFEST_FORMAT = "inhocfl.manifest"
ROUNDS_HEADER = ("round", "slice", "mode", "xai_method", "loss", "confidence", "psi",
                 "wall_time_s", "violation", "participating_cls")
TIMING_HEADER = ("slice", "mode", "xai_method", "convergence_round", "cumulative_wall_time_s",
                 "final_loss")
ATTRIBUTIONS_HEADER = ("slice",) + attribution.ATTRIBUTION_CSV_HEADER


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    federation: FederationConfig = field(default_factory=FederationConfig)
    output_dir: str = "runs/default"
    label: str = ""
    # None = first round whose loss is within 5 % of the final loss
    convergence_round: int = None
    # wall_time_s in rounds.csv; off keeps rounds.csv byte-reproducible
    record_wall_time: bool = True
    write_epochs: bool = False

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("output_dir", "label", "convergence_round",
                                            "record_wall_time", "write_epochs")}
        d.update(self.federation.to_dict())
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        top = {}
        for k in ("output_dir", "label", "convergence_round", "record_wall_time", "write_epochs"):
            if k in d:
                top[k] = d.pop(k)
        try:
            fed = FederationConfig.from_dict(d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(federation=fed, **top)

    def replace(self, **kw):
        fed_keys = {f.name for f in dataclasses.fields(FederationConfig)}
        fed_kw = {k: v for k, v in kw.items() if k in fed_keys}
        top_kw = {k: v for k, v in kw.items() if k not in fed_keys}
        fed = dataclasses.replace(self.federation, **fed_kw) if fed_kw else self.federation
        return dataclasses.replace(self, federation=fed, **top_kw)


def load_config(path):
    """Read a JSON experiment config or a run manifest."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: expected a JSON object")
    if doc.get("format") == MANIFEST_FORMAT:
        doc = doc["config"]
    try:
        return ExperimentConfig.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}:{_line_of_first_key(text, str(exc))}: {exc}") from None


def _line_of_first_key(text, message):
    # point at the line of the first config key named in the message
    for lineno, line in enumerate(text.splitlines(), 1):
        for token in line.split('"')[1::2]:
            if token and token in message:
                return lineno
    return 1


def config_hash(config):
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rounds_to_csv(rounds, record_wall_time=True):
    rows = []
    for r in rounds:
        d = dataclasses.asdict(r)
        if not record_wall_time:
            d["wall_time_s"] = 0.0
        rows.append([_fmt(d[k]) for k in ROUNDS_HEADER])
    return _csv_text(ROUNDS_HEADER, rows)


_ROUND_TYPES = {f.name: f.type for f in dataclasses.fields(RoundTrace)}


def parse_rounds_csv(text, source="rounds.csv"):
    """Parse rounds.csv content; raises SchemaError naming the bad column."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader, ()))
    for col in ROUNDS_HEADER:
        if col not in header:
            raise SchemaError(f"{source}: missing column {col!r}")
    out = []
    for lineno, line in enumerate(reader, 2):
        if not line:
            continue
        if len(line) != len(header):
            missing = header[len(line)] if len(line) < len(header) else "<extra>"
            raise SchemaError(f"{source}:{lineno}: truncated row, column {missing!r} absent")
        rec = dict(zip(header, line))
        vals = {}
        for col in ROUNDS_HEADER:
            typ = _ROUND_TYPES[col]
            try:
                vals[col] = typ(rec[col])
            except ValueError:
                raise SchemaError(f"{source}:{lineno}: bad value {rec[col]!r} in column {col!r}") from None
        out.append(RoundTrace(**vals))
    return out


def read_rounds(run_dir):
    path = os.path.join(run_dir, "rounds.csv")
    with open(path) as fh:
        return parse_rounds_csv(fh.read(), path)


def convergence_round(losses, override=None, factor=1.05):
    """First 1-based round whose loss is at most ``factor`` times the final loss."""
    if override is not None:
        return min(int(override), len(losses))
    final = losses[-1]
    for i, v in enumerate(losses, 1):
        if v <= factor * final:
            return i
    return len(losses)


def timing_table(rounds, override=None):
    """Cumulative wall time per slice up to its convergence round.

    ``override`` fixes the round: one int for every slice or a
    ``{slice: round}`` mapping, e.g. taken from a reference run so that
    several variants are timed over the same number of rounds.
    """
    rows = []
    for s in dict.fromkeys(r.slice for r in rounds):
        rs = sorted((r for r in rounds if r.slice == s), key=lambda r: r.round)
        fixed = override.get(s) if isinstance(override, dict) else override
        k = convergence_round([r.loss for r in rs], fixed)
        rows.append({
            "slice": s, "mode": rs[0].mode, "xai_method": rs[0].xai_method,
            "convergence_round": k,
            "cumulative_wall_time_s": float(sum(r.wall_time_s for r in rs[:k])),
            "final_loss": rs[-1].loss,
        })
    return rows


def final_attributions(result):
    """Attributions of each slice's final model over the pooled test split."""
    cfg = result.config
    out = {}
    for n, s in enumerate(cfg.slices):
        _, test = build_datasets(cfg, n)
        X = np.vstack([d.features for d in test])
        out[s] = attribution.explain(
            result.models[s], X, cfg.xai_method, ig_steps=cfg.ig_steps,
            background=np.zeros((1, X.shape[1])), n_coalitions=cfg.n_coalitions, seed=cfg.seed)
    return out


def manifest(config):
    return {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "package_version": __version__,
        "config_hash": config_hash(config),
        "label": config.label,
        "seed": config.federation.seed,
        "config": config.to_dict(),
    }


def run_experiment(config):
    """Run one experiment and write its artifacts; returns the FederationResult."""
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    result = run_federation(config.federation, keep_epochs=config.write_epochs)

    _atomic_write(os.path.join(out, "rounds.csv"),
                  rounds_to_csv(result.rounds, config.record_wall_time))

    attrs = final_attributions(result)
    rows = []
    for s, a in attrs.items():
        for i in range(a.raw.shape[0]):
            for j, name in enumerate(datagen.FEATURES):
                rows.append([s, i, name, repr(float(a.raw[i, j])), repr(float(a.weighted[i, j])),
                             repr(float(a.soft[i, j]))])
    _atomic_write(os.path.join(out, "attributions.csv"), _csv_text(ATTRIBUTIONS_HEADER, rows))
    summary = {}
    for s, a in attrs.items():
        dist = attribution.attribution_distribution(a)
        for d, name in zip(dist, datagen.FEATURES):
            d["feature"] = name
        summary[s] = dist
    _atomic_write(os.path.join(out, "attribution_summary.json"), json.dumps(summary, indent=2))

    timing = timing_table(result.rounds, config.convergence_round)
    _atomic_write(os.path.join(out, "timing.csv"),
                  _csv_text(TIMING_HEADER, [[_fmt(t[k]) for k in TIMING_HEADER] for t in timing]))
    _atomic_write(os.path.join(out, "summary.json"),
                  json.dumps({"test": result.test_metrics}, indent=2, sort_keys=True))
    if config.write_epochs:
        header = ("round", "slice", "cl_id", "epoch", "loss", "confidence", "psi", "lambda1", "u_size")
        erows = [[t, s, k, e.epoch, repr(e.loss), repr(e.confidence), repr(e.psi), repr(e.lambda1),
                  e.u_size] for t, s, k, e in result.epoch_traces]
        _atomic_write(os.path.join(out, "epochs.csv"), _csv_text(header, erows))
    _atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest(config), indent=2))
    return result


COMPARE_HEADER = ("round", "slice", "run", "loss", "confidence", "delta_loss", "delta_confidence")


def compare_runs(run_dirs):
    """Align rounds.csv of several runs against the first one.

    Returns ``(rows, summary)``: per-round rows with loss/confidence deltas
    relative to the first run, and per (slice, run) final-round gaps.
    Nothing is written, so a schema error leaves no partial output.
    """
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    runs = [read_rounds(d) for d in run_dirs]
    ref = {(r.round, r.slice): r for r in runs[0]}
    rows, summary = [], []
    for name, rs in zip(run_dirs, runs):
        idx = {(r.round, r.slice): r for r in rs}
        if set(idx) != set(ref):
            raise SchemaError(f"{name}: rounds/slices do not match {run_dirs[0]}")
        for key in sorted(ref, key=lambda k: (k[0], k[1])):
            r, b = idx[key], ref[key]
            rows.append({"round": key[0], "slice": key[1], "run": name, "loss": r.loss,
                         "confidence": r.confidence, "delta_loss": r.loss - b.loss,
                         "delta_confidence": r.confidence - b.confidence})
        last = max(k[0] for k in ref)
        for s in dict.fromkeys(k[1] for k in ref):
            r, b = idx[(last, s)], ref[(last, s)]
            summary.append({"slice": s, "run": name, "final_round": last,
                            "delta_loss": r.loss - b.loss,
                            "delta_confidence": r.confidence - b.confidence})
    return rows, summary


def comparison_csv(rows, summary):
    body = [[_fmt(r[k]) for k in COMPARE_HEADER] for r in rows]
    for s in summary:
        body.append(["final", s["slice"], s["run"], "", "", _fmt(s["delta_loss"]),
                     _fmt(s["delta_confidence"])])
    return _csv_text(COMPARE_HEADER, body)
