"""Command-line entry point: seeded experiments writing CSV tables.

Subcommands
-----------
theory-verify    closed-form checks of the linear-regression results
mnist-metrics    ensemble scores per augmentation policy
sampler-compare  uncertainty-based vs uniform transformation sampling
core-graph       which ordered pairs of transforms beat the first one alone

Settings come from per-command defaults, then an optional flat
``key=value`` file (``--config``), then flags; later sources win. A run writes
to ``<out>/<command>/<run id>/`` where the run id is a prefix of the SHA-256
of the canonical JSON of the resolved settings (``out`` and ``workers`` are
excluded because they cannot change results). Every CSV starts with a
``# config_hash=...`` comment line followed by the header row.

Exit codes: 0 success, 1 a check failed, 2 usage or input error.
"""

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classify, metrics, mnist_io
from . import linear_model as lm
from . import sampler as smp
from . import theory_checks as tc

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
RUN_ID_LENGTH = 16
MEMBER_SEED_STRIDE = 1000
EDGE_THRESHOLD = 0.10
COMPOSE_TOLERANCE = 0.15
COMPOSE_MIN_BUDGETS = 10.0
UNIFORM_RATIO_BAND = (0.9, 1.1)
SUBSAMPLE_K = 3
NOT_HASHED = ("out", "workers")

# Short names used on the command line for the transforms of the pairwise study.
ALIASES = {"rotation": "rotate", "crop": "random_crop", "translatex": "translate_x",
           "translatey": "translate_y"}
CORE_TRANSFORMS = ("rotation", "crop", "cutout", "translateX", "translateY")


class UsageError(Exception):
    """Invalid settings or missing inputs (exit code 2)."""


COMMON = {"seed": 0, "out": "runs", "workers": 1}
_TRAIN = {"epochs": 100, "batch_size": 500, "learning_rate": 0.1, "weight_decay": 1e-4, "momentum": 0.9,
          "hidden_dim": 100, "schedule": "cosine"}
_DATA = {"mnist_dir": "", "synthetic": False, "train_size": 0, "test_size": 0}
DEFAULTS = {
    "theory-verify": {"n": 200, "p": 0, "d": 100, "sigma": 0.0, "lam": 0.1, "theta": 0.9, "beta_norm": 1.0,
                      "seeds": 3, "transforms": 3, "sequence_length": 10, "trials": 100_000, "mixup_n": 500,
                      "mixup_sigma": 0.1, "mixup_row_scale": 0.1, "mixup_beta_norm": 0.05, "minnorm_n": 40,
                      "minnorm_trials": 5},
    "mnist-metrics": {**_DATA, **_TRAIN, "seeds": 9, "policies": "baseline,rotation"},
    "sampler-compare": {**_DATA, **_TRAIN, "seeds": 5, "sampler_transforms": ",".join(
        classify.DEFAULT_SAMPLER_TRANSFORMS), "L": 2, "C": 4, "S": 1, "frequency_window": 10},
    "core-graph": {**_DATA, **_TRAIN, "seeds": 5},
}
HELP = {
    "theory-verify": "check the linear-regression results on a seed grid",
    "mnist-metrics": "ensemble accuracy, intrinsic error and instability per policy",
    "sampler-compare": "uncertainty-based vs uniform transformation sampling",
    "core-graph": "edges A->B where applying B after A cuts intrinsic error by more than 10%",
}
SYNTHETIC_SIZES = (5000, 2000)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings of one run; serialisable and hashable."""

    command: str
    params: dict

    def canonical(self):
        kept = {k: v for k, v in sorted(self.params.items()) if k not in NOT_HASHED}
        return json.dumps({"command": self.command, "params": kept}, sort_keys=True, separators=(",", ":"))

    @property
    def full_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @property
    def run_id(self):
        return self.full_hash[:RUN_ID_LENGTH]

    def output_dir(self):
        return Path(self.params["out"]) / self.command / self.run_id

    @property
    def comment(self):
        return f"config_hash={self.full_hash}"

    def __getitem__(self, key):
        return self.params[key]


# -- settings ------------------------------------------------------------

def _coerce(key, value, default):
    if isinstance(default, bool):
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        return type(default)(value)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected {type(default).__name__}, got {value!r}") from None


def read_config_file(path, defaults):
    """Flat ``key=value`` lines; ``#`` starts a comment; dashes in keys are
    treated as underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in defaults:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        out[key] = _coerce(key, value, defaults[key])
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="augmentlab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, specific in DEFAULTS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="flat key=value settings file (flags override it)")
        for key, default in {**COMMON, **specific}.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, action="store_const", const=True, default=argparse.SUPPRESS)
            else:
                p.add_argument(flag, dest=key, type=str, default=argparse.SUPPRESS, metavar=key.upper(),
                               help=f"default: {default}")
    return parser


def resolve_config(args):
    defaults = {**COMMON, **DEFAULTS[args.command]}
    params = dict(defaults)
    if args.config:
        params.update(read_config_file(args.config, defaults))
    for key in defaults:
        if hasattr(args, key):
            params[key] = _coerce(key, getattr(args, key), defaults[key])
    cfg = ExperimentConfig(args.command, params)
    _validate(cfg)
    return cfg


def _validate(cfg):
    p = cfg.params
    if p["workers"] < 1:
        raise UsageError("workers must be at least 1")
    if p["seeds"] < 1:
        raise UsageError("seeds must be at least 1")
    if cfg.command == "theory-verify":
        if not 0 < p["d"] < p["n"] or p["lam"] <= 0 or p["sigma"] < 0 or p["trials"] < 2:
            raise UsageError("need 0 < d < n, lam > 0, sigma >= 0 and trials >= 2")
        if p["p"] and p["p"] <= p["d"] + max(p["transforms"], p["sequence_length"]):
            raise UsageError("p leaves too few coordinates outside the support for the rotations")
        if p["mixup_n"] < 10 or p["minnorm_n"] < 10:
            raise UsageError("mixup_n and minnorm_n must be at least 10")
    else:
        if p["seeds"] > MEMBER_SEED_STRIDE:
            raise UsageError(f"at most {MEMBER_SEED_STRIDE} seeds")
        _train_config(cfg, 0)
        if not p["synthetic"] and not p["mnist_dir"]:
            raise UsageError("give --mnist-dir or --synthetic")
    if cfg.command == "mnist-metrics":
        for name in _split_list(p["policies"]):
            make_policy(name)
    if cfg.command == "sampler-compare":
        _sampler_config(cfg)


def _split_list(text):
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    if not items:
        raise UsageError("empty list")
    return items


# -- theory-verify -------------------------------------------------------

THEORY_FIELDS = ("theorem", "seed", "n", "p", "lam", "sigma", "z_beta_sq", "actual", "bound", "leading",
                 "std_error", "satisfied")


def _flag(value):
    return {True: "true", False: "false", None: "na"}[value]


def _theory_rows(cfg, seed):
    n, d, lam, sigma = cfg["n"], cfg["d"], cfg["lam"], cfg["sigma"]
    p = cfg["p"] or int(1.5 * n)
    theta = cfg["theta"] * np.pi
    rows = []

    def row(theorem, actual, bound="", leading="", z_beta_sq="", std_error="", satisfied=None, nn=n, pp=p,
            ss=sigma):
        rows.append({"theorem": theorem, "seed": seed, "n": nn, "p": pp, "lam": repr(lam), "sigma": repr(ss),
                     "z_beta_sq": repr(z_beta_sq) if z_beta_sq != "" else "", "actual": repr(actual),
                     "bound": repr(bound) if bound != "" else "", "leading": repr(leading) if leading != "" else "",
                     "std_error": repr(std_error) if std_error != "" else "",
                     "satisfied": satisfied if isinstance(satisfied, str) else _flag(satisfied)})

    inst, f, k = tc.rotation_family(seed, n=n, p=p, d=d, sigma=sigma, lam=lam, theta=theta)
    r = tc.verify_theorem1(inst, f, k)
    row("single_sample", r.actual_reduction, r.lower_bound, r.leading_term, r.z_beta_sq, satisfied=r.satisfied)

    base = lm.generate_instance(n, p, d, sigma, lam, seed, beta_norm=cfg["beta_norm"])
    budget = tc.residual_budget(base)
    k = int(np.random.default_rng([seed, 1]).integers(n))
    inst_u, pairs = tc.rotation_sequence(base, cfg["transforms"], seed, theta, data_index=k)
    lead_u, actual_u = tc.corollary_uniform(inst_u, [f for f, _ in pairs], k)
    mean_u = float(np.mean(actual_u))
    lo, hi = UNIFORM_RATIO_BAND
    ok_u = None if lead_u <= 0 else bool(lo <= mean_u / lead_u <= hi)
    row("uniform_choice", mean_u, leading=lead_u, satisfied=ok_u)

    if len(pairs) >= 2:
        dl, da = tc.corollary_compose(inst_u, pairs[0][0], pairs[1][0], k)
        ok_c = None
        if abs(dl) >= COMPOSE_MIN_BUDGETS * budget:
            ok_c = bool(abs(da - dl) <= COMPOSE_TOLERANCE * abs(dl))
        row("composition", da, leading=dl, satisfied=ok_c)

    inst_s, seq = tc.rotation_sequence(base, cfg["sequence_length"], seed, theta)
    samples = [lm.make_augmented_sample(inst_s, kk, ff) for ff, kk in seq]
    rs = tc.verify_sequence(inst_s, samples)
    row("sequence", rs.total_reduction, bound=tc.SEQUENCE_C * rs.leading_sum, leading=rs.leading_sum,
        satisfied=rs.satisfied)

    mn = cfg["mixup_n"]
    inst_m = lm.generate_instance(mn, int(1.6 * mn), min(d, mn // 2), cfg["mixup_sigma"], lam, seed,
                                  row_scale=cfg["mixup_row_scale"], beta_norm=cfg["mixup_beta_norm"])
    rm = tc.verify_theorem2_mixup(inst_m, cfg["trials"], seed)
    row("mixup", rm.mean_reduction, bound=rm.rhs_bound, std_error=rm.std_error,
        satisfied="inconclusive" if rm.satisfied is None else rm.satisfied, nn=mn, pp=inst_m.p,
        ss=cfg["mixup_sigma"])

    nn = cfg["minnorm_n"]
    sig = cfg["mixup_sigma"]
    inst_n = lm.generate_instance(nn, 2 * nn, int(1.5 * nn), sig, lam, seed)
    rn = tc.verify_minnorm_mixup(inst_n, cfg["minnorm_trials"], seed)
    row("minnorm_mixup", rn.min_variance_change, bound=0.0, leading=rn.max_abs_bias_change,
        satisfied=rn.satisfied, nn=nn, pp=inst_n.p, ss=sig)
    return rows


def run_theory_verify(cfg, out):
    seeds = [cfg["seed"] + s for s in range(cfg["seeds"])]
    with ThreadPoolExecutor(cfg["workers"]) as pool:
        per_seed = list(pool.map(lambda s: _theory_rows(cfg, s), seeds))
    rows = [r for chunk in per_seed for r in chunk]
    rows.sort(key=lambda r: (r["seed"], THEORY_ORDER.index(r["theorem"])))
    _write_csv(out / "bound_reports.csv", THEORY_FIELDS, rows, cfg.comment)
    failed = [r for r in rows if r["satisfied"] == "false"]
    open_ = [r for r in rows if r["satisfied"] in ("na", "inconclusive")]
    print(f"theory-verify: {len(rows)} rows, {len(rows) - len(failed) - len(open_)} satisfied, "
          f"{len(failed)} failed, {len(open_)} not applicable or inconclusive")
    for r in failed:
        print(f"  FAILED {r['theorem']} seed={r['seed']}: actual={r['actual']} bound={r['bound']} "
              f"leading={r['leading']}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


THEORY_ORDER = ("single_sample", "uniform_choice", "composition", "sequence", "mixup", "minnorm_mixup")


# -- training experiments -------------------------------------------------

def _train_config(cfg, seed):
    try:
        return classify.TrainConfig(batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
                                    weight_decay=cfg["weight_decay"], schedule=cfg["schedule"],
                                    epochs=cfg["epochs"], seed=seed, momentum=cfg["momentum"],
                                    hidden_dim=cfg["hidden_dim"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sampler_config(cfg):
    ids = tuple(ALIASES.get(t.lower(), t) for t in _split_list(cfg["sampler_transforms"]))
    unknown = [t for t in ids if t not in classify.TRANSFORMS]
    if unknown:
        raise UsageError(f"unknown transforms {unknown}")
    try:
        return classify.default_policy_config(ids, L=cfg["L"], C=cfg["C"], S=cfg["S"])
    except smp.ConfigError as exc:
        raise UsageError(str(exc)) from None


def transform_id(name):
    tid = ALIASES.get(name.lower(), name)
    if tid not in classify.TRANSFORMS:
        raise UsageError(f"unknown transform {name!r}")
    return tid


def make_policy(name):
    """Policy from its command-line name.

    ``baseline``; a transform name or alias (``rotation``, ``crop``,
    ``translateX``, ...); a composition ``a+b`` applied left to right;
    ``mixup:<same-class fraction>``; ``uncertainty`` or ``uniform`` for the
    samplers over the default transform set.
    """
    key = name.strip()
    if key == "baseline":
        return classify.NoAugment()
    if key.startswith("mixup:"):
        try:
            frac = float(key.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad mixup fraction in {name!r}") from None
        if not 0.0 <= frac <= 1.0:
            raise UsageError("mixup fraction must lie in [0, 1]")
        return classify.Mixup(same_class_fraction=frac, name=key)
    if key == "uncertainty":
        return classify.UncertaintySampling(classify.default_policy_config())
    if key == "uniform":
        return classify.UniformSampling(classify.default_policy_config())
    return classify.FixedTransforms(tuple(transform_id(t) for t in key.split("+")), name=key)


def load_data(cfg):
    """``(train, test)`` datasets from MNIST files or the synthetic generator."""
    if cfg["synthetic"]:
        n_train = cfg["train_size"] or SYNTHETIC_SIZES[0]
        n_test = cfg["test_size"] or SYNTHETIC_SIZES[1]
        return (mnist_io.synthetic_digits(n_train, cfg["seed"], "train"),
                mnist_io.synthetic_digits(n_test, cfg["seed"], "test"))
    try:
        train = mnist_io.load_mnist(cfg["mnist_dir"], "train")
        test = mnist_io.load_mnist(cfg["mnist_dir"], "test")
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except mnist_io.IdxFormatError as exc:
        raise UsageError(f"malformed MNIST file: {exc}") from None
    if cfg["train_size"]:
        train = train.subset(slice(0, cfg["train_size"]))
    if cfg["test_size"]:
        test = test.subset(slice(0, cfg["test_size"]))
    return train, test


def member_seed(seed, member):
    return MEMBER_SEED_STRIDE * seed + member


def _fit(cfg, policy, member, train, test):
    tcfg = _train_config(cfg, member_seed(cfg["seed"], member))
    result = classify.train(train.images, train.labels, tcfg, policy,
                            frequency_window=cfg.params.get("frequency_window", 10))
    return result, classify.evaluate(result.model, test.images, test.labels)


def train_ensembles(cfg, policies, train, test):
    """``{name: (EnsemblePredictions, [TrainResult])}`` with ``cfg['seeds']`` members each.

    Member ``j`` of every policy uses training seed ``1000 * seed + j``, so
    policies are compared on paired initialisations and data orders.
    """
    jobs = [(name, j) for name in policies for j in range(cfg["seeds"])]
    built = {name: make_policy(name) for name in policies}
    with ThreadPoolExecutor(cfg["workers"]) as pool:
        done = list(pool.map(lambda job: _fit(cfg, built[job[0]], job[1], train, test), jobs))
    out = {}
    for name in policies:
        members = [done[i] for i, job in enumerate(jobs) if job[0] == name]
        preds = np.stack([ev.predictions for _, ev in members])
        probs = np.stack([ev.probabilities for _, ev in members])
        out[name] = (metrics.EnsemblePredictions(preds, test.labels, probs), [res for res, _ in members])
    return out


def run_mnist_metrics(cfg, out):
    policies = list(dict.fromkeys(_split_list(cfg["policies"])))
    train, test = load_data(cfg)
    ens = train_ensembles(cfg, policies, train, test)
    tie = cfg["seed"]
    scored = [(cfg.run_id, name, metrics.score(ens[name][0], tie)) for name in policies]
    metrics.write_results_csv(out / "scores.csv", scored, cfg.comment)
    for _, name, rep in scored:
        print(f"{name:>24s}  acc={rep.avg_accuracy:.4f}  error={rep.intrinsic_error:.4f}  "
              f"instability={rep.instability:.4f}  (k={rep.k})")
    if cfg["seeds"] >= SUBSAMPLE_K:
        rows = []
        for _, name, full in scored:
            sub = metrics.seed_subsample_estimate(ens[name][0], SUBSAMPLE_K, tie)
            rel = abs(sub.intrinsic_error - full.intrinsic_error) / full.intrinsic_error \
                if full.intrinsic_error > 0 else float("nan")
            rows.append({"policy": name, "k_sub": SUBSAMPLE_K, "k": full.k, "error_sub": repr(sub.intrinsic_error),
                         "error_full": repr(full.intrinsic_error), "relative_diff": repr(rel),
                         "instability_sub": repr(sub.instability), "instability_full": repr(full.instability)})
        _write_csv(out / "subsample.csv", tuple(rows[0]), rows, cfg.comment)
    mix = [(make_policy(n).same_class_fraction, n, rep) for _, n, rep in scored if n.startswith("mixup:")]
    if mix:
        rows = [{"same_class_fraction": repr(f), "policy": n, "instability": repr(rep.instability),
                 "error_score": repr(rep.intrinsic_error), "avg_acc": repr(rep.avg_accuracy)}
                for f, n, rep in sorted(mix, key=lambda t: (t[0], t[1]))]
        _write_csv(out / "mixup_series.csv", tuple(rows[0]), rows, cfg.comment)
    return EXIT_OK


def run_sampler_compare(cfg, out):
    pconf = _sampler_config(cfg)
    train, test = load_data(cfg)
    policies = {"uncertainty": classify.UncertaintySampling(pconf), "uniform": classify.UniformSampling(pconf)}
    jobs = [(name, j) for name in policies for j in range(cfg["seeds"])]
    with ThreadPoolExecutor(cfg["workers"]) as pool:
        done = list(pool.map(lambda job: _fit(cfg, policies[job[0]], job[1], train, test), jobs))
    acc_rows = [{"policy": name, "seed": member_seed(cfg["seed"], j), "accuracy": repr(ev.accuracy)}
                for (name, j), (_, ev) in zip(jobs, done)]
    _write_csv(out / "accuracy.csv", ("policy", "seed", "accuracy"), acc_rows, cfg.comment)
    for name in policies:
        merged = smp.FrequencyRecorder()
        for (pname, _), (res, _) in zip(jobs, done):
            if pname == name:
                merged.merge(res.frequencies)
        smp.write_frequency_csv(out / f"frequencies_{name}.csv", merged, cfg.comment)
        mean = np.mean([ev.accuracy for (pname, _), (_, ev) in zip(jobs, done) if pname == name])
        print(f"{name:>12s}  mean accuracy {mean:.4f} over {cfg['seeds']} seeds")
    return EXIT_OK


def run_core_graph(cfg, out):
    singles = list(CORE_TRANSFORMS)
    pairs = [(a, b) for a in singles for b in singles if a != b]
    names = singles + [f"{a}+{b}" for a, b in pairs]
    train, test = load_data(cfg)
    ens = train_ensembles(cfg, names, train, test)
    err = {n: metrics.intrinsic_error_score(ens[n][0], cfg["seed"]) for n in names}
    pair_rows, edges = [], []
    for a, b in pairs:
        ea, eab = err[a], err[f"{a}+{b}"]
        rel = (ea - eab) / ea if ea > 0 else float("nan")
        pair_rows.append({"from": a, "to": b, "error_from": repr(ea), "error_composed": repr(eab),
                          "relative_reduction": repr(rel)})
        if rel > EDGE_THRESHOLD:
            edges.append({"from": a, "to": b, "relative_reduction": repr(rel)})
    _write_csv(out / "pairs.csv", ("from", "to", "error_from", "error_composed", "relative_reduction"),
               pair_rows, cfg.comment)
    _write_csv(out / "edges.csv", ("from", "to", "relative_reduction"), edges, cfg.comment)
    from_translation = [e for e in edges if e["from"].startswith("translate")
                        and e["to"] in ("rotation", "crop", "cutout")]
    print(f"core-graph: {len(pairs)} ordered pairs, {len(edges)} edges; "
          f"{len(from_translation)} edges from a translation into rotation/crop/cutout")
    return EXIT_OK


# -- plumbing ----------------------------------------------------------------

def _write_csv(path, fields, rows, comment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


RUNNERS = {"theory-verify": run_theory_verify, "mnist-metrics": run_mnist_metrics,
           "sampler-compare": run_sampler_compare, "core-graph": run_core_graph}


def _write_config(cfg, out):
    with open(out / "config.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# {cfg.comment}\n")
        for key, value in sorted(cfg.params.items()):
            if key not in NOT_HASHED:
                fh.write(f"{key}={value}\n")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        _write_config(cfg, out)
        code = RUNNERS[cfg.command](cfg, out)
    except UsageError as exc:
        print(f"augmentlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"results in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
