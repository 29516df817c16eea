"""Command-line pipeline: synth, features, partition, train, compare,
lm-train, decode, score.

Exit codes: 0 success, 1 usage error (bad flags, missing input paths),
2 data error (malformed files), 3 numeric abort (diverged training).
"""

import argparse
import os
import sys

from . import corpus as corpus_mod
from . import ctc as ctc_mod
from . import features as feats
from . import lm as lm_mod
from . import evaluate, trainer
from .network import build_network, catalog, dump_config, get_config, load_config
from .numerics import load_checkpoint, make_rng

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _require_path(path, what):
    if not os.path.exists(str(path)):
        raise UsageError(f"{what} not found: {path}")
    return path


def build_parser():
    parser = _Parser(prog="rcasr", description=__doc__)
    parser.add_argument("--dump-catalog", metavar="NAME", nargs="?", const="*",
                        help="print catalog config(s) as text and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="generator spec file (optional; defaults built in)")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-phonemes", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.25)

    p = sub.add_parser("features", help="extract 39-dim features from wav data")
    p.add_argument("--data", required=True, help="corpus root with wav/ and phn/")
    p.add_argument("--out", required=True, help="output corpus root (feat/ dumps)")
    p.add_argument("--stats-out", help="write normalization stats here")
    p.add_argument("--stats-in", help="apply existing stats instead of fitting")
    p.add_argument("--train-ids", help="fit stats on these ids only (one per line)")

    p = sub.add_parser("partition", help="write train/val/test id files")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", help="train,val,test counts (default: scaled 5000/1000/300)")
    p.add_argument("--candidates", type=int, default=1,
                   help="draw this many candidates and keep the best by baseline cross-validation")
    p.add_argument("--budget-epochs", type=int, default=3)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--config", required=True, help="catalog name or network config file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partition", help="directory with train/val/test id files")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.00005)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = sub.add_parser("compare", help="train several models on identical data")
    p.add_argument("--models", required=True, help="comma-separated catalog names")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partition")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.00005)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("lm-train", help="train the bidirectional n-gram model")
    p.add_argument("--data", required=True, help="corpus root (phn/ transcripts)")
    p.add_argument("--out", required=True)
    p.add_argument("--ids", help="restrict to these utterance ids (one per line)")
    p.add_argument("--k", type=float, default=lm_mod.DEFAULT_K)
    p.add_argument("--mu", type=float, default=lm_mod.DEFAULT_MU)

    p = sub.add_parser("decode", help="decode a corpus with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--lm")
    p.add_argument("--lambda", dest="lam", type=float, default=0.3)
    p.add_argument("--config", help="network config (default: <name>.netcfg next to the checkpoint)")
    p.add_argument("--ids", help="decode only these utterance ids (one per line)")

    p = sub.add_parser("score", help="score hypotheses against reference transcripts")
    p.add_argument("--refs", required=True, help="corpus root with phn/ transcripts")
    p.add_argument("--hyps", required=True, help="hypothesis file (utt_id score ph...)")
    p.add_argument("--out", required=True)
    return parser


def _read_ids(path):
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip()]


def cmd_synth(args):
    spec_rng = make_rng(args.seed, 10)
    if args.spec:
        _require_path(args.spec, "spec file")
        spec = _load_synth_spec(args.spec)
    else:
        spec = corpus_mod.SyntheticSpec.default(
            n_phonemes=args.n_phonemes, rng=spec_rng, sigma=args.sigma)
    corp = corpus_mod.generate_synthetic(spec, args.n, make_rng(args.seed, 11))
    corpus_mod.save_corpus(corp, args.out)
    print(f"wrote {len(corp)} utterances to {args.out}")
    return EXIT_OK


def _load_synth_spec(path):
    """Spec file: `n_phonemes N`, `sigma S`, `duration LO HI`, `sentence LO HI`,
    `seed K` lines; means/transitions are drawn from the seed."""
    fields = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            fields[parts[0]] = parts[1:]
    spec = corpus_mod.SyntheticSpec.default(
        n_phonemes=int(fields.get("n_phonemes", ["10"])[0]),
        rng=make_rng(int(fields.get("seed", ["0"])[0]), 10),
        sigma=float(fields.get("sigma", ["0.25"])[0]),
    )
    if "duration" in fields:
        spec.duration_range = (int(fields["duration"][0]), int(fields["duration"][1]))
    if "sentence" in fields:
        spec.sentence_length_range = (int(fields["sentence"][0]), int(fields["sentence"][1]))
    return spec


def cmd_features(args):
    _require_path(args.data, "data directory")
    corp = corpus_mod.load_corpus(args.data)
    if len(corp) == 0:
        raise UsageError(f"no utterances under {args.data}")
    ids = corp.ids()
    fit_ids = _read_ids(args.train_ids) if args.train_ids else ids
    if args.stats_in:
        _require_path(args.stats_in, "stats file")
        stats = feats.load_stats(args.stats_in)
    else:
        _, stats = feats.normalize_corpus([corp[i].features for i in fit_ids])
    out = corpus_mod.Corpus(
        utterances={
            i: corpus_mod.Utterance(
                id=i, labels=corp[i].labels,
                features=feats.apply_stats(corp[i].features, stats))
            for i in ids
        },
        alphabet=corp.alphabet,
    )
    corpus_mod.save_corpus(out, args.out)
    if args.stats_out:
        feats.save_stats(args.stats_out, stats)
    print(f"extracted features for {len(out)} utterances to {args.out}")
    return EXIT_OK


def cmd_partition(args):
    _require_path(args.data, "data directory")
    corp = corpus_mod.load_corpus(args.data)
    sizes = None
    if args.sizes:
        sizes = tuple(int(v) for v in args.sizes.split(","))
        if len(sizes) != 3:
            raise UsageError("--sizes wants three comma-separated counts")
    parts = corpus_mod.make_partitions(
        corp, n_partitions=args.candidates, rng=make_rng(args.seed, 20), sizes=sizes,
        seed=args.seed)
    chosen = corpus_mod.select_partition(parts, corp, budget_epochs=args.budget_epochs) \
        if args.candidates > 1 else parts[0]
    corpus_mod.save_partition(chosen, args.out)
    print(f"wrote partition ({len(chosen.train)}/{len(chosen.val)}/{len(chosen.test)}) to {args.out}")
    return EXIT_OK


def _load_training_inputs(args):
    _require_path(args.data, "data directory")
    corp = corpus_mod.load_corpus(args.data)
    part = None
    if args.partition:
        _require_path(args.partition, "partition directory")
        part = corpus_mod.load_partition(args.partition).check_covers(corp)
    return corp, part


def cmd_train(args):
    try:
        net_config = get_config(args.config)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    corp, part = _load_training_inputs(args)
    os.makedirs(args.out, exist_ok=True)
    cfg = trainer.TrainConfig(
        network=net_config, lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, dropout=args.dropout,
        log_path=os.path.join(args.out, f"{net_config.name}_batches.log"),
        checkpoint_dir=args.out, checkpoint_every=args.checkpoint_every,
    )
    _, curve = trainer.train(cfg, corp, part)
    curve.to_csv(os.path.join(args.out, f"{net_config.name}_curve.csv"))
    print(f"trained {net_config.name} for {args.epochs} epochs; outputs in {args.out}")
    return EXIT_OK


def cmd_compare(args):
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    for name in names:
        try:
            get_config(name)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    corp, part = _load_training_inputs(args)
    cfg = trainer.TrainConfig(
        network=names[0], lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed,
    )
    results, errors = trainer.compare_architectures(names, cfg, corp, part, args.out)
    for name, path in results.items():
        print(f"{name}: {path}")
    for name, exc in errors.items():
        print(f"{name}: FAILED ({exc})", file=sys.stderr)
    return EXIT_OK if results else EXIT_NUMERIC


def cmd_lm_train(args):
    _require_path(args.data, "data directory")
    corp = corpus_mod.load_corpus(args.data)
    ids = _read_ids(args.ids) if args.ids else corp.ids()
    sentences = [corp[i].labels for i in ids]
    model = lm_mod.train_lm(sentences, smoothing_k=args.k, mu=args.mu)
    lm_mod.save_lm(args.out, model)
    print(f"trained n-gram model on {len(sentences)} sentences -> {args.out}")
    return EXIT_OK


def _resolve_decode_config(args):
    if args.config:
        _require_path(args.config, "network config")
        return load_config(args.config)
    stem = os.path.basename(args.ckpt)
    name = stem.rsplit("_", 1)[0]
    sibling = os.path.join(os.path.dirname(args.ckpt), f"{name}.netcfg")
    if os.path.exists(sibling):
        return load_config(sibling)
    raise UsageError(
        f"no network config: pass --config or keep {name}.netcfg next to the checkpoint")


def cmd_decode(args):
    _require_path(args.ckpt, "checkpoint")
    _require_path(args.data, "data directory")
    if args.beam < 1:
        raise UsageError(f"beam width must be >= 1, got {args.beam}")
    net_config = _resolve_decode_config(args)
    corp = corpus_mod.load_corpus(args.data)
    store = load_checkpoint(args.ckpt)
    net = build_network(net_config, output_units=corp.alphabet.size)
    _adopt_values(net.store, store)
    model = None
    if args.lm:
        _require_path(args.lm, "language model")
        model = lm_mod.load_lm(args.lm)
    ids = _read_ids(args.ids) if args.ids else corp.ids()
    lines = []
    for utt_id in ids:
        utt = corp[utt_id]
        logits, _ = net.forward(utt.features, training=False)
        y = ctc_mod.softmax(logits)
        hyps = ctc_mod.beam_decode(y, width=args.beam)
        if model is not None:
            symbol_hyps = [(corp.alphabet.decode(h), s) for h, s in hyps]
            best_seq, best_score = lm_mod.rectify(model, symbol_hyps, args.lam)
            lines.append(f"{utt_id} {best_score:.6f} {' '.join(best_seq)}".rstrip())
        else:
            lines.extend(ctc_mod.format_hypotheses(utt_id, hyps[:1], corp.alphabet))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    print(f"decoded {len(ids)} utterances -> {args.out}")
    return EXIT_OK


def _adopt_values(store, loaded):
    ours = set(store.entries)
    theirs = set(loaded.entries)
    if ours != theirs:
        raise ValueError(
            f"checkpoint/config mismatch; missing {sorted(ours - theirs)}, "
            f"unexpected {sorted(theirs - ours)}")
    for name, p in loaded.entries.items():
        if store[name].value.shape != p.value.shape:
            raise ValueError(f"checkpoint shape mismatch for '{name}'")
        store[name].value[...] = p.value


def read_hypotheses(path):
    hyps = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}:{ln}: expected `utt_id score ph...`")
            hyps[parts[0]] = tuple(parts[2:])
    return hyps


def cmd_score(args):
    _require_path(args.refs, "reference directory")
    _require_path(args.hyps, "hypothesis file")
    corp = corpus_mod.load_corpus(args.refs)
    hyps = read_hypotheses(args.hyps)
    refs = {utt_id: corp[utt_id].labels for utt_id in hyps}
    report = evaluate.per(refs, hyps)
    report.to_csv(args.out)
    print(f"PER {report.aggregate:.4f} over {len(hyps)} utterances -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "partition": cmd_partition,
    "train": cmd_train,
    "compare": cmd_compare,
    "lm-train": cmd_lm_train,
    "decode": cmd_decode,
    "score": cmd_score,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.dump_catalog:
            cat = catalog()
            names = sorted(cat) if args.dump_catalog == "*" else [args.dump_catalog]
            for name in names:
                if name not in cat:
                    raise UsageError(f"unknown catalog entry '{name}'")
                sys.stdout.write(dump_config(cat[name]) + "\n")
            return EXIT_OK
        if not args.command:
            parser.print_usage()
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (trainer.TrainingAborted, ArithmeticError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
