"""Command-line entry point: ``timeaware-cbow <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import corpus, evaluation, model, synthgen
from .trainer import PRESETS, TrainConfig, train

log = logging.getLogger("timeaware_cbow")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt():
    return argparse.ArgumentDefaultsHelpFormatter


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--dim", type=int, default=d.dim, help="embedding dimension d")
    g.add_argument("--scope", type=int, default=d.scope, help="temporal scope S in time units")
    g.add_argument("--gamma", type=int, default=d.gamma, help="context threshold (max contexts per target)")
    g.add_argument("--negative", type=int, default=d.negative, help="negative samples r per target")
    g.add_argument("--alpha", type=float, default=d.alpha, help="starting learning rate")
    g.add_argument("--epochs", type=int, default=d.epochs, help="training epochs")
    g.add_argument("--min-count", type=int, default=d.min_count, help="discard codes rarer than this")
    g.add_argument("--sample", type=float, default=d.sample_threshold,
                   help="subsampling rejection threshold (0 disables)")
    g.add_argument("--time-unit", type=int, default=d.time_unit_days, help="days per time unit")
    g.add_argument("--threads", type=int, default=d.workers, help="worker threads (1 = deterministic)")
    g.add_argument("--seed", type=int, default=d.seed, help="random seed")
    g.add_argument("--mode", choices=("mce", "cbow"), default=d.mode, help="attention model or plain CBOW")
    g.add_argument("--freeze-attention", action="store_true", help="keep attention scores at zero")
    g.add_argument("--shuffle", action="store_true", help="shuffle entity order every epoch")
    g.add_argument("--precision", choices=("float32", "float64"), default=d.precision,
                   help="parameter precision")
    g.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="epoch preset: small=30, large=5 (overrides --epochs)")


def _train_config(args, **override) -> TrainConfig:
    fields = dict(
        dim=args.dim, scope=args.scope, gamma=args.gamma, negative=args.negative, alpha=args.alpha,
        epochs=args.epochs, min_count=args.min_count, sample_threshold=args.sample,
        time_unit_days=args.time_unit, workers=args.threads, seed=args.seed, mode=args.mode,
        freeze_attention=args.freeze_attention, shuffle=args.shuffle, precision=args.precision,
    )
    if args.preset:
        fields.update(PRESETS[args.preset])
    fields.update(override)
    try:
        return TrainConfig(**fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timeaware-cbow", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = synthgen.SynthConfig()
    p = sub.add_parser("gen-synth", help="write a synthetic corpus and its label files",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=s.seed, help="random seed")
    p.add_argument("--groups", type=int, default=s.n_groups, help="number of code groups")
    p.add_argument("--codes-per-group", type=int, default=s.codes_per_group, help="codes per group")
    p.add_argument("--profiles", default=None,
                   help="comma-separated profile per group (peak,stable,sequela); default cycles")
    p.add_argument("--entities", type=int, default=s.n_entities, help="number of entities")
    p.add_argument("--episodes", type=float, default=s.episodes_per_entity, help="mean episodes per entity")
    p.add_argument("--emissions", type=float, default=s.emissions_per_episode,
                   help="mean code emissions per episode")
    p.add_argument("--horizon", type=int, default=s.horizon_units, help="observation horizon in time units")
    p.add_argument("--noise", type=float, default=s.noise_rate, help="noise-code probability per time unit")
    p.add_argument("--noise-codes", type=int, default=s.noise_codes, help="size of the noise-code pool")
    p.add_argument("--visit-prob", type=float, default=s.visit_prob,
                   help="probability that a time unit is observed")
    p.add_argument("--time-unit", type=int, default=s.time_unit_days, help="days per time unit")

    p = sub.add_parser("build-vocab", help="count codes and write the vocabulary file",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("corpus", type=Path, help="event log (entity<TAB>day<TAB>code)")
    p.add_argument("--min-count", type=int, default=TrainConfig().min_count, help="discard rarer codes")
    p.add_argument("--out", required=True, type=Path, help="vocabulary file to write")

    p = sub.add_parser("train", help="train embeddings and attention profiles",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("corpus", type=Path, help="event log (entity<TAB>day<TAB>code)")
    p.add_argument("--vocab", type=Path, default=None, help="existing vocabulary file (else built)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--save-output-vectors", action="store_true", help="also write output vectors")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="score embeddings with k-means NMI and P@1",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("--embeddings", required=True, type=Path, help="embedding text file")
    p.add_argument("--clusters", type=Path, default=None, help="code<TAB>category file for NMI")
    p.add_argument("--neighbors", type=Path, default=None, help="code<TAB>subcategory file for P@1")
    p.add_argument("--k", type=int, default=None, help="clusters (default: number of categories)")
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts")
    p.add_argument("--seed", type=int, default=0, help="k-means seed")
    p.add_argument("--out", type=Path, default=None, help="metrics JSON (default: stdout)")

    p = sub.add_parser("export-attention", help="write per-code attention profiles as CSV",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("--model", required=True, type=Path, help="model.npz written by train")
    p.add_argument("--vocab", required=True, type=Path, help="vocabulary file written by train")
    p.add_argument("--out", required=True, type=Path, help="CSV to write")

    p = sub.add_parser("sweep", help="train and evaluate over a list of gamma or scope values",
                       formatter_class=_fmt(), allow_abbrev=False)
    p.add_argument("corpus", type=Path, help="event log (entity<TAB>day<TAB>code)")
    p.add_argument("--param", choices=("gamma", "scope"), required=True, help="parameter to vary")
    p.add_argument("--values", required=True, help="comma-separated integer values")
    p.add_argument("--clusters", type=Path, default=None, help="code<TAB>category file for NMI")
    p.add_argument("--neighbors", type=Path, default=None, help="code<TAB>subcategory file for P@1")
    p.add_argument("--k", type=int, default=None, help="clusters (default: number of categories)")
    p.add_argument("--out", required=True, type=Path, help="CSV to write")
    _add_train_flags(p)
    return parser


def _require_file(path: Path | None, what: str) -> None:
    if path is not None and not path.is_file():
        raise UsageError(f"{what} not found: {path}")


def _require_parent(path: Path) -> None:
    parent = path.parent if path.parent != Path("") else Path(".")
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def _load_corpus(path: Path, min_count: int, vocab_path: Path | None = None):
    records = corpus.parse_events(path)
    if vocab_path is not None:
        vocab = corpus.Vocabulary.load(vocab_path)
        encoded = corpus.encode_records(records, vocab)
    else:
        vocab, encoded = corpus.build_vocab(records, min_count)
    log.info("%d entities, %d codes in vocabulary", len(encoded), len(vocab))
    return vocab, encoded


def cmd_gen_synth(args) -> None:
    profiles = args.profiles.split(",") if args.profiles else None
    try:
        cfg = synthgen.SynthConfig(
            n_groups=args.groups, codes_per_group=args.codes_per_group, profiles=profiles,
            n_entities=args.entities, episodes_per_entity=args.episodes,
            emissions_per_episode=args.emissions, horizon_units=args.horizon, noise_rate=args.noise,
            noise_codes=args.noise_codes, visit_prob=args.visit_prob, time_unit_days=args.time_unit,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = synthgen.generate(cfg).write(args.out)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))


def cmd_build_vocab(args) -> None:
    _require_file(args.corpus, "corpus")
    _require_parent(args.out)
    vocab, _ = _load_corpus(args.corpus, args.min_count)
    vocab.save(args.out)


def _write_outputs(outdir: Path, params, vocab, report, save_output_vectors: bool) -> None:
    model.save_embeddings(outdir / "embeddings.txt", params.v, vocab.codes)
    if save_output_vectors:
        model.save_embeddings(outdir / "output_vectors.txt", params.vout, vocab.codes)
    model.save_profiles_csv(outdir / "attention.csv", params, vocab)
    params.save(outdir / "model.npz")
    vocab.save(outdir / "vocab.txt")
    (outdir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")


def cmd_train(args) -> None:
    _require_file(args.corpus, "corpus")
    _require_file(args.vocab, "vocabulary")
    cfg = _train_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    vocab, encoded = _load_corpus(args.corpus, cfg.min_count, args.vocab)
    params, report = train(encoded, vocab, cfg)
    _write_outputs(args.out, params, vocab, report, args.save_output_vectors)


def cmd_eval(args) -> dict:
    _require_file(args.embeddings, "embeddings")
    _require_file(args.clusters, "cluster labels")
    _require_file(args.neighbors, "neighbour labels")
    if args.clusters is None and args.neighbors is None:
        raise UsageError("eval needs --clusters and/or --neighbors")
    if args.out is not None:
        _require_parent(args.out)
    codes, vectors = model.load_embeddings(args.embeddings)
    truth = evaluation.load_ground_truth(args.clusters, args.neighbors, set(codes))
    metrics = evaluation.evaluate(codes, vectors, truth, k=args.k, restarts=args.restarts, seed=args.seed)
    if args.out is None:
        json.dump(metrics, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        evaluation.write_metrics(args.out, metrics)
    return metrics


def cmd_export_attention(args) -> None:
    _require_file(args.model, "model")
    _require_file(args.vocab, "vocabulary")
    _require_parent(args.out)
    params = model.ModelParams.load(args.model)
    vocab = corpus.Vocabulary.load(args.vocab)
    if len(vocab) != params.vocab_size:
        raise DataError(f"vocabulary has {len(vocab)} codes but the model has {params.vocab_size}")
    model.save_profiles_csv(args.out, params, vocab)


def cmd_sweep(args) -> None:
    _require_file(args.corpus, "corpus")
    _require_file(args.clusters, "cluster labels")
    _require_file(args.neighbors, "neighbour labels")
    if args.clusters is None and args.neighbors is None:
        raise UsageError("sweep needs --clusters and/or --neighbors")
    _require_parent(args.out)
    try:
        values = [int(x) for x in args.values.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {args.values!r}") from None
    if not values:
        raise UsageError("--values is empty")
    configs = [_train_config(args, **{args.param: val}) for val in values]
    vocab, encoded = _load_corpus(args.corpus, configs[0].min_count)
    truth = evaluation.load_ground_truth(args.clusters, args.neighbors, vocab)
    rows = []
    for val, cfg in zip(values, configs):
        params, report = train(encoded, vocab, cfg)
        metrics = evaluation.evaluate(vocab.codes, params.v, truth, k=args.k, seed=cfg.seed)
        rows.append({
            "param": args.param, "value": val, "mode": cfg.mode, "scope": cfg.scope, "gamma": cfg.gamma,
            "nmi": metrics["nmi"], "p_at_1": metrics["p_at_1"],
            "final_loss": report.mean_loss_per_epoch[-1],
            "attention_ops": report.attention_ops_per_epoch[-1],
        })
        log.info("%s=%d: nmi=%s p@1=%s", args.param, val, metrics["nmi"], metrics["p_at_1"])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "eval": cmd_eval,
    "export-attention": cmd_export_attention,
    "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, corpus.CorpusFormatError, corpus.EmptyVocabularyError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
