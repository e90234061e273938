"""Pipeline commands: synth | train-oracle | prepare | train-policy |
attack | baseline | evaluate | report.

Each command reads one flat config file, draws all randomness from one
root seed via named streams, writes its artifact atomically, and drops a
frozen copy of the resolved config next to it. Re-running a command with
the same config and seed reproduces every output byte.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines as bl
from .agent import (
    VARIANT_ACTION_EMB,
    VARIANT_CLASSIC,
    attack_with_policy,
    load_policy,
    save_policy,
    train_policy,
)
from .config import ConfigError, ExperimentConfig
from .corpus import (
    EmptySplitError,
    build_attack_sets,
    load_corpus,
    load_split,
    save_split,
    tokenize,
)
from .env import AttackEnv, AttackOutcome
from .evaluation import (
    emit_access_csv,
    emit_csv,
    eval_row,
    normalized_curve,
    oracle_access_report,
)
from .ioutil import atomic_write_text, read_jsonl, write_jsonl
from .oracle import load_builtin, save_builtin, train_builtin
from .perturb import PosLexicon, SearchSpace, load_stopwords
from .seeding import named_rng
from .synthetic import generate_world, write_world
from .vectors import MeanVectorEmbedder, load_vectors

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2  # argparse's own
EXIT_UNKNOWN_METHOD = 3
EXIT_MISSING_ARTIFACT = 4
EXIT_CONFIG = 5

METHODS = (
    "lunatc",
    "lunatc-classic",
    "simple-search",
    "genfooler-tf",
    "genfooler-pwws",
    "greedy-tf",
    "greedy-pwws",
)


class MissingArtifactError(Exception):
    pass


class UnknownMethodError(Exception):
    pass


class Runtime:
    """Everything loaded from the config's resource paths."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg["paths.out"])
        vectors_path = cfg.path("paths.vectors")
        self.vectors = load_vectors(vectors_path)
        syn_path = cfg.synonym_vectors_path
        self.synonyms = self.vectors if syn_path == vectors_path else load_vectors(syn_path)
        stopwords = load_stopwords(cfg.path("paths.stopwords"))
        tagger = PosLexicon.load(cfg.path("paths.pos_lexicon"))
        self.embedder = MeanVectorEmbedder(self.vectors)
        self.space = SearchSpace(
            synonyms=self.synonyms,
            vectors=self.vectors,
            cfg=cfg.synonym_config(stopwords),
            tagger=tagger,
            embedder=self.embedder,
        )

    def env(self, max_turns: int | None = None) -> AttackEnv:
        return AttackEnv(
            self.oracle(),
            self.space,
            eps_penalty=self.cfg["env.eps_penalty"],
            sim_scale=self.cfg["env.sim_scale"],
            max_turns=max_turns,
        )

    def oracle(self):
        if not hasattr(self, "_oracle"):
            path = self.out / "oracle.json"
            if not path.exists():
                raise MissingArtifactError(f"{path}: run train-oracle first")
            self._oracle = load_builtin(path, self.embedder)
        return self._oracle

    def split(self):
        path = self.out / "split.jsonl"
        if not path.exists():
            raise MissingArtifactError(f"{path}: run prepare first")
        return load_split(path)

    def policy_path(self, method: str, seed: int) -> Path:
        return self.out / f"policy-{method}-seed{seed}.json"


def _texts(docs):
    return [tokenize(d.raw_text, d.id) for d in docs]


def cmd_synth(args) -> int:
    world = generate_world(seed=args.seed, n_pos=args.n_pos, n_neg=args.n_neg)
    paths = write_world(world, args.out)
    lines = [f"paths.{k} = {v}" for k, v in sorted(paths.items())]
    lines += [f"paths.out = {Path(args.out) / 'run'}", f"seed = {args.seed}"]
    config_path = Path(args.out) / "config.txt"
    atomic_write_text(config_path, "\n".join(lines) + "\n")
    print(f"wrote {len(world.docs)} docs; starter config at {config_path}")
    return EXIT_OK


def cmd_train_oracle(cfg: ExperimentConfig, seed: int) -> int:
    rt = Runtime(cfg)
    docs = load_corpus(cfg.path("paths.corpus"))
    handle = train_builtin(
        docs,
        rt.embedder,
        epochs=cfg["oracle.epochs"],
        lr=cfg["oracle.lr"],
        seed=seed,
        hidden=cfg["oracle.hidden"],
        batch_size=cfg["oracle.batch_size"],
    )
    save_builtin(handle, rt.out / "oracle.json")
    cfg.freeze(rt.out / "train-oracle.config.txt")
    print(f"oracle trained on {len(docs)} docs, train accuracy {handle.backend.train_accuracy:.4f}")
    return EXIT_OK


def cmd_prepare(cfg: ExperimentConfig, seed: int) -> int:
    rt = Runtime(cfg)
    docs = load_corpus(cfg.path("paths.corpus"))
    oracle = rt.oracle()
    env = rt.env()
    rounds = cfg["prepare.simple_search_rounds"]
    search_rng = named_rng(seed, "prepare.simple_search")

    def greedy_tf_attack(t):
        return bl.per_text_greedy_attack(t, env, lambda x: bl.importance_tf(x, oracle), method="greedy-tf")

    def simple_search_filter(t):
        outcome = None
        for _ in range(rounds):
            outcome = bl.simple_search_attack(t, env, search_rng)
            if outcome.success:
                break
        return outcome

    split = build_attack_sets(
        docs,
        oracle,
        attackers={"greedy-tf": greedy_tf_attack, "simple-search": simple_search_filter},
        train_filter_attack="greedy-tf",
        direction_label=cfg["prepare.direction_label"],
        train_fraction=cfg["prepare.train_fraction"],
        rng=named_rng(seed, "prepare.split"),
    )
    save_split(split, rt.out / "split.jsonl")
    cfg.freeze(rt.out / "prepare.config.txt")
    print(f"kept {len(split.train)} train / {len(split.test)} test docs (of {len(docs)})")
    return EXIT_OK


def cmd_train_policy(cfg: ExperimentConfig, seed: int, method: str) -> int:
    if method not in ("lunatc", "lunatc-classic"):
        raise UnknownMethodError(f"train-policy supports lunatc | lunatc-classic, not {method!r}")
    rt = Runtime(cfg)
    split = rt.split()
    env = rt.env(max_turns=cfg["train.max_turns_train"])
    tc = cfg.train_config(seed)
    variant = VARIANT_ACTION_EMB if method == "lunatc" else VARIANT_CLASSIC
    policy, log = train_policy(_texts(split.train), env, tc, variant=variant)
    save_policy(policy, tc, rt.policy_path(method, seed))
    log.to_csv(rt.out / f"train-log-{method}-seed{seed}.csv")
    cfg.freeze(rt.out / f"train-policy-{method}-seed{seed}.config.txt")
    wins = sum(r["success"] for r in log.rows)
    print(f"trained {method} seed {seed}: {len(log.rows)} rounds, {wins} episode flips")
    return EXIT_OK


def _attack_outcomes(rt: Runtime, cfg: ExperimentConfig, method: str, seed: int) -> list[AttackOutcome]:
    split = rt.split()
    env = rt.env()
    oracle = rt.oracle()
    test_texts = _texts(split.test)

    if method in ("lunatc", "lunatc-classic"):
        path = rt.policy_path(method, seed)
        if not path.exists():
            raise MissingArtifactError(f"{path}: run train-policy first")
        policy, alpha, _ = load_policy(path)
        return [
            attack_with_policy(t, env, policy, alpha=alpha, method=method, seed=seed)
            for t in test_texts
        ]
    if method == "simple-search":
        rng = named_rng(seed, "search.ordering")
        return [bl.simple_search_attack(t, env, rng, method=method, seed=seed) for t in test_texts]
    if method == "greedy-tf":
        fn = lambda x: bl.importance_tf(x, oracle)  # noqa: E731
        return [bl.per_text_greedy_attack(t, env, fn, method=method, seed=seed) for t in test_texts]
    if method == "greedy-pwws":
        fn = lambda x: bl.importance_pwws(x, oracle, rt.space)  # noqa: E731
        return [bl.per_text_greedy_attack(t, env, fn, method=method, seed=seed) for t in test_texts]
    if method in ("genfooler-tf", "genfooler-pwws"):
        if method.endswith("tf"):
            fn = lambda x: bl.importance_tf(x, oracle)  # noqa: E731
        else:
            fn = lambda x: bl.importance_pwws(x, oracle, rt.space)  # noqa: E731
        model = bl.genfooler_train(
            _texts(split.train),
            fn,
            rt.embedder,
            target_fn=method.split("-")[1],
            l_max=cfg["genfooler.l_max"],
            folds=cfg["genfooler.folds"],
            max_epochs=cfg["genfooler.max_epochs"],
            lr=cfg["genfooler.lr"],
            seed=seed,
            hidden=tuple(cfg["genfooler.hidden"]),
        )
        bl.save_genfooler(model, rt.out / f"genfooler-{model.target_fn}-seed{seed}.json")
        return [bl.genfooler_attack(t, env, model, method=method, seed=seed) for t in test_texts]
    raise UnknownMethodError(method)


def _write_outcomes(rt: Runtime, method: str, seed: int, outcomes: list[AttackOutcome]) -> Path:
    path = rt.out / "outcomes" / f"{method}-seed{seed}.jsonl"
    write_jsonl(path, [o.to_record() for o in outcomes])
    return path


def cmd_attack(cfg: ExperimentConfig, seed: int, method: str) -> int:
    if method not in METHODS:
        raise UnknownMethodError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    rt = Runtime(cfg)
    outcomes = _attack_outcomes(rt, cfg, method, seed)
    path = _write_outcomes(rt, method, seed, outcomes)
    cfg.freeze(rt.out / f"attack-{method}-seed{seed}.config.txt")
    flips = sum(o.success for o in outcomes)
    at = cfg["eval.threshold"]
    hits = sum(1 for o in outcomes if o.success and o.similarity >= at)
    print(
        f"{method} seed {seed}: {flips}/{len(outcomes)} flips, "
        f"{hits}/{len(outcomes)} at threshold {at}; wrote {path}"
    )
    return EXIT_OK


def cmd_baseline(cfg: ExperimentConfig) -> int:
    """Run the whole baseline battery: simple search across its seeds,
    plus both per-text greedy attacks once."""
    rt = Runtime(cfg)
    for seed in cfg["eval.baseline_seeds"]:
        outcomes = _attack_outcomes(rt, cfg, "simple-search", seed)
        _write_outcomes(rt, "simple-search", seed, outcomes)
        print(f"simple-search seed {seed}: {sum(o.success for o in outcomes)}/{len(outcomes)} flips")
    for method in ("greedy-tf", "greedy-pwws"):
        outcomes = _attack_outcomes(rt, cfg, method, 0)
        _write_outcomes(rt, method, 0, outcomes)
        print(f"{method}: {sum(o.success for o in outcomes)}/{len(outcomes)} flips")
    cfg.freeze(rt.out / "baseline.config.txt")
    return EXIT_OK


def _load_outcome_files(rt: Runtime) -> dict[tuple[str, int], list[AttackOutcome]]:
    outdir = rt.out / "outcomes"
    if not outdir.is_dir():
        raise MissingArtifactError(f"{outdir}: run attack/baseline first")
    grouped: dict[tuple[str, int], list[AttackOutcome]] = {}
    for path in sorted(outdir.glob("*.jsonl")):
        for rec in read_jsonl(path):
            o = AttackOutcome.from_record(rec)
            grouped.setdefault((o.method, o.seed if o.seed is not None else 0), []).append(o)
    if not grouped:
        raise MissingArtifactError(f"{outdir}: no outcome files")
    return grouped


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    rt = Runtime(cfg)
    grouped = _load_outcome_files(rt)
    thresholds = cfg.thresholds()
    rows = []
    for (method, seed) in sorted(grouped):
        for th in thresholds:
            rows.append(eval_row(grouped[(method, seed)], th, method, seed))
    emit_csv(rows, rt.out / "eval.csv")
    cfg.freeze(rt.out / "evaluate.config.txt")
    print(f"wrote {rt.out / 'eval.csv'} ({len(rows)} rows)")
    return EXIT_OK


CURVE_CSV_HEADER = "method,threshold,normalized_success,ci_lo,ci_hi,defined"


def cmd_report(cfg: ExperimentConfig) -> int:
    from .plots import emit_svg_barplot, emit_svg_lineplot

    rt = Runtime(cfg)
    grouped = _load_outcome_files(rt)
    report_dir = rt.out / "report"
    thresholds = cfg.thresholds()

    by_method: dict[str, list[list[AttackOutcome]]] = {}
    for (method, seed) in sorted(grouped):
        by_method.setdefault(method, []).append(grouped[(method, seed)])
    baseline = by_method.get("simple-search")
    if not baseline:
        raise MissingArtifactError("report needs simple-search outcomes as the normalizer")

    curves = []
    lines = [CURVE_CSV_HEADER]
    for method in sorted(by_method):
        if method == "simple-search":
            continue
        curve = normalized_curve(by_method[method], baseline, thresholds, label=method)
        curves.append(curve)
        for i, th in enumerate(curve.x):
            lines.append(
                f"{method},{th!r},{curve.values[i]!r},{curve.lo[i]!r},"
                f"{curve.hi[i]!r},{int(curve.defined[i])}"
            )
    atomic_write_text(report_dir / "normalized_success.csv", "\n".join(lines) + "\n")
    emit_svg_lineplot(
        curves,
        report_dir / "normalized_success.svg",
        xlabel="similarity threshold",
        ylabel="success rate / simple-search mean",
        title="normalized success vs threshold",
    )

    pooled = {m: [o for per_seed in v for o in per_seed] for m, v in by_method.items()}
    access_rows = oracle_access_report(pooled)
    emit_access_csv(access_rows, report_dir / "oracle_access.csv")
    emit_svg_barplot(
        access_rows,
        ["mean_label_queries", "mean_logit_queries"],
        report_dir / "oracle_access.svg",
        ylabel="mean queries per text",
        title="oracle access per attacked text",
    )
    cfg.freeze(report_dir / "report.config.txt")
    print(f"wrote report under {report_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uapolicy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="materialize the bundled synthetic benchmark")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-pos", type=int, default=900)
    synth.add_argument("--n-neg", type=int, default=900)

    for name in ("train-oracle", "prepare", "train-policy", "attack", "baseline", "evaluate", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None, help="override the config's root seed")
        p.add_argument("--out", default=None, help="override paths.out")
        if name in ("train-policy", "attack"):
            p.add_argument("--method", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args)
    try:
        overrides = {}
        if args.out is not None:
            overrides["paths.out"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if getattr(args, "method", None) is not None:
            overrides["attack.method"] = args.method
        cfg = ExperimentConfig.from_file(args.config, overrides)
        seed = cfg["seed"]
        method = cfg["attack.method"]
        if args.command == "train-oracle":
            return cmd_train_oracle(cfg, seed)
        if args.command == "prepare":
            return cmd_prepare(cfg, seed)
        if args.command == "train-policy":
            return cmd_train_policy(cfg, seed, method)
        if args.command == "attack":
            return cmd_attack(cfg, seed, method)
        if args.command == "baseline":
            return cmd_baseline(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        raise AssertionError(args.command)
    except UnknownMethodError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_METHOD
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (ConfigError, EmptySplitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except Exception as e:  # pragma: no cover - last-resort reporting
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
