"""Named desk-scale experiments, their parameter schemas and the runner."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dynamics, genericity, models, spectral
from .errors import ConfigError
from .extrapolation import compare_extrapolations, intervene, wavelet_extrapolation_report
from .rng import make_rng


# ---------------------------------------------------------------------------
# schema

def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(conv):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [conv(x) for x in text]
        return [conv(x) for x in str(text).split(",") if x.strip()]
    return parse


PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "floatlist": _parse_list(float),
    "intlist": _parse_list(int),
}


@dataclass(frozen=True)
class Param:
    name: str
    type: str
    default: object
    help: str = ""
    choices: tuple = ()

    def parse(self, raw):
        try:
            value = PARSERS[self.type](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.name}: cannot parse {raw!r} as {self.type} ({exc})", self.name) from None
        if self.choices and value not in self.choices:
            raise ConfigError(f"{self.name}: {value!r} not in {list(self.choices)}", self.name)
        return value

    def format(self, value) -> str:
        if self.type in ("floatlist", "intlist"):
            return ",".join(repr(v) for v in value)
        if self.type == "bool":
            return "true" if value else "false"
        return str(value)


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    reproduces: str
    params: tuple
    func: object = field(repr=False, compare=False)

    def schema(self) -> dict:
        return {p.name: p for p in self.params}

    def defaults(self) -> dict:
        return {p.name: p.default for p in self.params}


REGISTRY: dict = {}


def experiment(name, summary, reproduces, params):
    def deco(func):
        REGISTRY[name] = Experiment(name, summary, reproduces, tuple(params), func)
        return func
    return deco


def list_experiments() -> list:
    """Machine-readable catalog of every experiment."""
    out = []
    for e in REGISTRY.values():
        out.append({
            "name": e.name,
            "summary": e.summary,
            "reproduces": e.reproduces,
            "params": [{"name": p.name, "type": p.type, "default": p.default, "help": p.help,
                        **({"choices": list(p.choices)} if p.choices else {})} for p in e.params],
        })
    return out


def catalog_table() -> str:
    lines = []
    for e in REGISTRY.values():
        lines.append(f"{e.name:16s} {e.summary}")
        for p in e.params:
            lines.append(f"    {p.name:14s} {p.type:9s} default={p.format(p.default)}")
    return "\n".join(lines)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key] = value
    return out


def resolve_config(name: str, overrides: dict | None = None) -> dict:
    """Defaults of experiment ``name`` updated by typed ``overrides``."""
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}", "experiment")
    exp = REGISTRY[name]
    schema = exp.schema()
    cfg = exp.defaults()
    for key, raw in (overrides or {}).items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for experiment {name}", key)
        cfg[key] = schema[key].parse(raw)
    _validate(name, cfg)
    return cfg


def _validate(name, cfg):
    for key in ("iterations", "seeds", "n", "batch", "trials", "record_every", "interleave", "size"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1", key)
    for key in ("lr", "sigma", "gamma", "init_noise"):
        if key in cfg and cfg[key] < 0:
            raise ConfigError(f"{key} must be >= 0", key)


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    duration_s: float
    files: dict
    threads: int

    def to_json(self) -> str:
        return json.dumps({"experiment": self.experiment, "config": self.config, "version": self.version,
                           "duration_s": self.duration_s, "threads": self.threads,
                           "files": self.files}, indent=2, sort_keys=True) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def default_threads() -> int:
    return os.cpu_count() or 1


def run(name: str, overrides: dict | None = None, out_dir=None, threads: int | None = None) -> RunManifest:
    """Run experiment ``name`` and write its CSVs and ``manifest.json``.

    Outputs go to ``<out_dir>/<name>/``; ``out_dir`` defaults to
    ``$MECHLAB_OUT`` or ``./mechlab-out``.
    """
    cfg = resolve_config(name, overrides)
    threads = threads or default_threads()
    if threads < 1:
        raise ConfigError("threads must be >= 1", "threads")
    root = Path(out_dir or os.environ.get("MECHLAB_OUT") or "mechlab-out")
    dest = root / name
    dest.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = REGISTRY[name].func(cfg, dest, threads)
    duration = time.perf_counter() - t0
    digests = {f: sha256_file(dest / f) for f in sorted(files)}
    manifest = RunManifest(name, cfg, __version__, duration, digests, threads)
    (dest / "manifest.json").write_text(manifest.to_json())
    return manifest


# ---------------------------------------------------------------------------
# helpers shared by experiments

def _eye_truth(cfg):
    # 1D eye generator along the horizontal axis
    eye = np.asarray(cfg["eye"], dtype=float)[None, :]
    return models.make_eye_generator(cfg["d"], 1, eye, (0, cfg["offset"]))


def _fan_out(fn, items, threads):
    """Map ``fn`` over contiguous chunks of ``items``; results in input order."""
    items = list(items)
    n = max(1, min(threads, len(items)))
    bounds = np.linspace(0, len(items), n + 1).astype(int)
    chunks = [items[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    if n == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, chunks))


def _stack(results, attr):
    return np.concatenate([getattr(r, attr) for r in results], axis=0)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _thin(rec, every):
    if every <= 1:
        return rec
    sel = np.arange(0, len(rec), every)
    if sel[-1] != len(rec) - 1:
        sel = np.append(sel, len(rec) - 1)
    pick = lambda x: None if x is None else np.asarray(x)[sel]
    return dynamics.TrajectoryRecord(rec.iters[sel], pick(rec.a), pick(rec.b), pick(rec.loss), pick(rec.L),
                                     pick(rec.rho), pick(rec.cosdist), None, rec.meta)


EYE_PARAMS = (
    Param("d", "int", 5, "horizontal half-extent (prime)"),
    Param("eye", "floatlist", [1.0, 0.6], "eye kernel values along the horizontal axis"),
    Param("offset", "int", 3, "horizontal offset of the second eye"),
)
FOURIER_PARAMS = (
    Param("lr", "float", 0.01, "learning rate"),
    Param("sigma", "float", 1.0, "std of target noise per frequency (real and imaginary parts)"),
    Param("iterations", "int", 20000, "SGD iterations"),
    Param("init_noise", "float", 1.0, "initial kernels: normalized truth + Uniform[0, init_noise]"),
    Param("record_every", "int", 100, "keep every n-th iteration"),
)


# ---------------------------------------------------------------------------
# experiments

@experiment("toy-drift", "scalar two-factor least squares under CTGD, SGD or ASGD",
            "gradient-descent trajectories on the scalar toy problem",
            [Param("algorithm", "str", "sgd", "optimizer", ("ctgd", "sgd", "asgd")),
             Param("c0", "float", 1.0, "target mean"),
             Param("a0", "float", 2.0, "initial a"),
             Param("b0", "float", 0.5, "initial b"),
             Param("lr", "float", 0.01, "learning rate"),
             Param("sigma", "float", 0.3, "target noise std"),
             Param("iterations", "int", 200000, "number of steps"),
             Param("ctgd_step", "float", 0.001, "RK4 step for ctgd"),
             Param("record_every", "int", 100, "keep every n-th iteration (the last one is always kept)"),
             Param("seed", "int", 0, "run seed")])
def _toy_drift(cfg, dest, threads):
    oc = dynamics.OptimizerConfig(cfg["lr"], cfg["sigma"], cfg["c0"], cfg["iterations"], cfg["seed"],
                                  cfg["algorithm"], cfg["ctgd_step"])
    rec = dynamics.run_stochastic(oc, cfg["a0"], cfg["b0"])
    _thin(rec, cfg["record_every"]).write_csv(dest / "trajectory.csv")
    return ["trajectory.csv"]


@experiment("fourier-drift", "Fourier-domain SGD of an eye-generator convolution pair, one seed",
            "SGD trajectories of individual Fourier coefficients",
            EYE_PARAMS + FOURIER_PARAMS[:4] + (
                Param("record_every", "int", 10, "keep every n-th iteration"),
                Param("gamma", "float", 0.0, "SDR regularization rate (0 disables)"),
                Param("interleave", "int", 1, "SGD steps per regularizer step"),
                Param("seed", "int", 0, "run seed")))
def _fourier_drift(cfg, dest, threads):
    truth = _eye_truth(cfg)
    reg = dynamics.SdrRegConfig(cfg["gamma"], cfg["interleave"]) if cfg["gamma"] > 0 else None
    res = dynamics.fourier_sgd_batch(truth, [cfg["seed"]], cfg["lr"], cfg["sigma"], cfg["iterations"], reg,
                                     cfg["init_noise"], record_every=cfg["record_every"], keep_moduli=True)
    rec = res.trajectory(0)
    rec.write_csv(dest / "trajectory.csv")
    rows = []
    for t in range(len(rec)):
        for j in range(rec.moduli["k1"].shape[1]):
            rows.append((int(rec.iters[t]), j, float(rec.moduli["k1"][t, j]), float(rec.moduli["k2"][t, j])))
    _write_rows(dest / "moduli.csv", ["iter", "bin", "mod_k1", "mod_k2"], rows)
    return ["trajectory.csv", "moduli.csv"]


@experiment("sdr-reg-study", "multi-seed Fourier SGD with and without SDR regularization",
            "evolution of SDR and kernel distance with and without SDR regularization",
            EYE_PARAMS + FOURIER_PARAMS + (
                Param("seeds", "int", 200, "number of seeds"),
                Param("gamma", "float", 0.1, "SDR regularization rate of the regularized arm"),
                Param("interleave", "int", 1, "SGD steps per regularizer step"),
                Param("symmetric", "bool", False, "also regularize k1 against k2"),
                Param("seed", "int", 0, "base seed; run i uses base*1000000 + i")))
def _sdr_reg_study(cfg, dest, threads):
    truth = _eye_truth(cfg)
    seeds = [cfg["seed"] * 1_000_000 + i for i in range(cfg["seeds"])]
    arms = {"noreg": None,
            "reg": dynamics.SdrRegConfig(cfg["gamma"], cfg["interleave"], cfg["symmetric"])}
    stats = {}
    iters = None
    for arm, reg in arms.items():
        def job(chunk, reg=reg):
            return dynamics.fourier_sgd_batch(truth, chunk, cfg["lr"], cfg["sigma"], cfg["iterations"], reg,
                                              cfg["init_noise"], record_every=cfg["record_every"])
        parts = _fan_out(job, seeds, threads)
        iters = parts[0].iters
        for s in ("rho", "cosdist", "L", "loss"):
            stats[f"{s}_{arm}"] = _stack(parts, s)
    rows = dynamics.aggregate(iters, stats)
    dynamics.write_aggregate_csv(dest / "aggregate.csv", rows)
    return ["aggregate.csv"]


@experiment("eye-extrapolate", "extrapolation errors of a solution-set member under all stretches",
            "eye-generator extrapolation by a true and a non-equivalent solution",
            (Param("d", "int", 7, "horizontal half-extent (prime)"),
             Param("eye", "floatlist", [1.0, 0.6], "eye kernel values"),
             Param("offset", "int", 2, "horizontal offset of the second eye"),
             Param("candidate", "str", "lambda", "candidate solution", ("truth", "lambda", "omega")),
             Param("lam", "float", 2.0, "scale of the lambda candidate"),
             Param("levels", "int", 0, "Haar levels (0 = full depth)"),
             Param("direct", "bool", True, "add the direct-stretch baseline column"),
             Param("dump", "bool", False, "write extrapolated outputs as grid files"),
             Param("seed", "int", 0, "seed for the random omega")))
def _eye_extrapolate(cfg, dest, threads):
    truth = _eye_truth(cfg)
    if cfg["candidate"] == "truth":
        cand = truth
    elif cfg["candidate"] == "lambda":
        cand = models.lambda_scaled(truth, cfg["lam"])
    else:
        omega = models.random_invertible_kernel(make_rng(cfg["seed"], 4), truth.shape)
        cand = models.compose_omega(truth, omega)
    levels = cfg["levels"] or None
    wav = wavelet_extrapolation_report(cand, truth, levels=levels)
    base = compare_extrapolations(cand, truth, direct_baseline=cfg["direct"])
    for i, row in enumerate(wav.rows):
        wav.rows[i] = type(row)(row.g, row.mse, row.wavelet, base.rows[i].direct)
    wav.write_csv(dest / "report.csv")
    files = ["report.csv"]
    if cfg["dump"]:
        z = models.one_hot(truth.shape, (0, 0))
        for row in wav.rows:
            for tag, m in (("truth", truth), ("candidate", cand)):
                fname = f"{tag}_g{row.g}.grid"
                spectral.write_grid(dest / fname, models.forward(intervene(m, row.g), z))
                files.append(fname)
    return files


@experiment("anticausal", "causal versus anticausal SDR of random eye generators",
            "genericity of the causal and the anticausal direction",
            (Param("d", "int", 7, "half-extent on both axes (prime)"),
             Param("delta", "int", 3, "eye side"),
             Param("offset", "int", 4, "horizontal offset of the second eye"),
             Param("trials", "int", 20, "number of random eyes"),
             Param("include_dc", "bool", True, "include the zero frequency in averages"),
             Param("seed", "int", 0, "run seed")))
def _anticausal(cfg, dest, threads):
    rows = []
    for i in range(cfg["trials"]):
        rng = make_rng(cfg["seed"], 5, i)
        eye = rng.uniform(0.1, 1.0, (cfg["delta"], cfg["delta"]))
        m = models.make_eye_generator(cfg["d"], cfg["d"], eye, (0, cfg["offset"]))
        rc, ra = genericity.anticausal_sdr(m, cfg["include_dc"])
        rows.append((i, float(rc), float(ra)))
    _write_rows(dest / "anticausal.csv", ["trial", "rho_causal", "rho_anticausal"], rows)
    return ["anticausal.csv"]


@experiment("sdr-histogram", "SDR of every filter/channel pair of a random surrogate conv net",
            "distribution of SDR over filter/activation-map pairs",
            (Param("channels", "intlist", [16, 8], "channel counts, input first"),
             Param("size", "int", 16, "input map side"),
             Param("upsample", "intlist", [1], "up-sampling factor per layer"),
             Param("batch", "int", 64, "number of white-noise input samples"),
             Param("layer", "int", 0, "layer to analyze"),
             Param("nonlinearity", "str", "linear", "elementwise nonlinearity", ("linear", "relu")),
             Param("include_dc", "bool", False, "include the zero frequency in averages"),
             Param("seed", "int", 0, "run seed")))
def _sdr_histogram(cfg, dest, threads):
    n_layers = len(cfg["channels"]) - 1
    if n_layers < 1:
        raise ConfigError("channels needs at least two entries", "channels")
    up = cfg["upsample"] if len(cfg["upsample"]) == n_layers else (cfg["upsample"] * n_layers)[:n_layers]
    if len(cfg["upsample"]) not in (1, n_layers):
        raise ConfigError("upsample needs one entry or one per layer", "upsample")
    if not 0 <= cfg["layer"] < n_layers:
        raise ConfigError(f"layer must be in [0, {n_layers})", "layer")
    net = genericity.SurrogateConvNet.random(make_rng(cfg["seed"], 6), cfg["channels"], cfg["size"], up,
                                             cfg["nonlinearity"])
    x = make_rng(cfg["seed"], 7).standard_normal((cfg["batch"], cfg["channels"][0], cfg["size"], cfg["size"]))
    entries = genericity.sdr_histogram(net, x, cfg["layer"], cfg["include_dc"])
    genericity.write_histogram_csv(dest / "histogram.csv", entries)
    return ["histogram.csv"]


@experiment("prop6-limit", "SDR of the balanced solution for log-normal diagonal truths",
            "non-genericity of the balanced solution in high dimension",
            (Param("n", "int", 100000, "dimension d-1"),
             Param("sigma", "float", 1.0, "log-normal shape"),
             Param("seed", "int", 0, "run seed")))
def _balanced_limit(cfg, dest, threads):
    r = dynamics.balanced_lognormal_sdr(cfg["n"], cfg["seed"], cfg["sigma"])
    _write_rows(dest / "limit.csv", ["n", "rho_prime", "moment_ratio", "analytic"],
                [(r.n, r.rho_prime, r.moment_ratio, r.analytic)])
    return ["limit.csv"]
