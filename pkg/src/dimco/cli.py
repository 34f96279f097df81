"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error. All
randomness flows from --seed, so identical invocations produce byte-identical
output files.
"""

from __future__ import annotations

import argparse
import sys
import time
from math import log

import numpy as np

from . import bound as bound_mod
from . import codes as codes_mod
from . import data as data_mod
from . import encoder as enc
from . import kernels, quantizers, retrieval, trainer
from .codes import CodeSpec, FileFormatError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> _Parser:
    p = _Parser(prog="dimco", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a synthetic clustered dataset")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--spread", type=float, default=0.05)
    g.add_argument("--center-scale", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train an encoder on a DEMB dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--d", type=int, required=True)
    t.add_argument("--hidden", type=_int_list, default=[])
    t.add_argument("--bottleneck", type=int, default=128)
    t.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--classes-per-batch", type=int, default=None)
    t.add_argument("--items-per-class", type=int, default=10)
    t.add_argument("--lam", type=float, default=1.0)
    t.add_argument("--ind-pairs", type=int, default=None)
    t.add_argument("--per-class-limit", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--log", default=None, help="write the per-step TSV log here")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("encode", help="encode a dataset into a DCOD code database")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="evaluation suites")
    evsub = ev.add_subparsers(dest="eval_command", required=True)

    f = evsub.add_parser("fewshot", help="N-way K-shot episode accuracy")
    f.add_argument("--model", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--ways", type=int, default=5)
    f.add_argument("--shots", type=int, default=1)
    f.add_argument("--queries", type=int, default=1)
    f.add_argument("--episodes", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)

    r = evsub.add_parser("retrieval", help="Recall@K over a database split")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True, help="query split (DEMB)")
    r.add_argument("--db-data", default=None, help="database split; defaults to --data")
    r.add_argument("--ks", type=_int_list, default=[1])

    kn = evsub.add_parser("knn", help="kNN top-1 accuracy")
    kn.add_argument("--model", required=True)
    kn.add_argument("--data", required=True, help="query split (DEMB)")
    kn.add_argument("--db-data", default=None)
    kn.add_argument("--k-neighbors", type=int, default=200)

    co = evsub.add_parser("correlation", help="metric correlation across checkpoints")
    co.add_argument("--data", required=True)
    co.add_argument("--k", type=int, required=True)
    co.add_argument("--d", type=int, required=True)
    co.add_argument("--hidden", type=_int_list, default=[])
    co.add_argument("--bottleneck", type=int, default=128)
    co.add_argument("--epochs", type=int, default=12)
    co.add_argument("--checkpoint-every", type=int, default=1)
    co.add_argument("--episodes", type=int, default=200)
    co.add_argument("--lr", type=float, default=1e-2)
    co.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("compress", help="compress embeddings and score top-1 retention")
    c.add_argument("--method", choices=("dimco", "pq", "sq"), required=True)
    c.add_argument("--data", required=True, help="training split (DEMB)")
    c.add_argument("--eval-data", default=None, help="query split; defaults to --data")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--d", type=int, default=None, help="ignored for sq (d = D)")
    c.add_argument("--epochs", type=int, default=40)
    c.add_argument("--bottleneck", type=int, default=128)
    c.add_argument("--lr", type=float, default=1e-2)
    c.add_argument("--k-neighbors", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None, help="write codebook/model here")

    b = sub.add_parser("bound", help="finite-sample MI deviation bound")
    b.add_argument("--support-size", type=int, default=None)
    b.add_argument("--k", type=int, default=None, help="derive support size as k^d")
    b.add_argument("--d", type=int, default=None)
    b.add_argument("--labels", type=int, required=True)
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--vc-dim", type=float, default=None)
    b.add_argument("--tasks", type=int, default=None)
    b.add_argument("--c-vc", type=float, default=1.0)
    b.add_argument("--c-mi", type=float, default=1.0)
    b.add_argument("--verify-trials", type=int, default=0,
                   help="run the Monte-Carlo check with this many trials")
    b.add_argument("--seed", type=int, default=0)

    be = sub.add_parser("bench", help="compare numba kernels against the numpy fallback")
    be.add_argument("--count", type=int, default=50000)
    be.add_argument("--k", type=int, default=16)
    be.add_argument("--d", type=int, default=8)
    be.add_argument("--repeats", type=int, default=5)
    be.add_argument("--seed", type=int, default=0)

    return p


def _load_model_and_data(model_path, data_path):
    params = enc.read_checkpoint(model_path)
    emb = data_mod.read_embeddings(data_path)
    if emb.dim != params.config.input_dim:
        raise ValueError(
            f"data dim {emb.dim} != model input dim {params.config.input_dim}"
        )
    return params, emb


def _cmd_gen_synth(args) -> int:
    spec = data_mod.SynthSpec(
        classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        cluster_spread=args.spread,
        center_scale=args.center_scale,
        seed=args.seed,
    )
    emb = data_mod.gen_synth(spec)
    data_mod.write_embeddings(args.out, emb)
    print(f"wrote {emb.count} x {emb.dim} embeddings, {emb.class_count} classes -> {args.out}")
    return 0


def _train_from_args(emb, args):
    spec = CodeSpec(k=args.k, d=args.d)
    encoder_config = enc.EncoderConfig(
        input_dim=emb.dim,
        hidden_dims=tuple(args.hidden),
        spec=spec,
        bottleneck=args.bottleneck,
        activation=getattr(args, "activation", "relu"),
        seed=args.seed,
    )
    train_config = trainer.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        classes_per_batch=getattr(args, "classes_per_batch", None),
        items_per_class=getattr(args, "items_per_class", 10),
        lam=getattr(args, "lam", 1.0),
        ind_pairs_per_batch=getattr(args, "ind_pairs", None),
        per_class_limit=getattr(args, "per_class_limit", None),
        seed=args.seed,
    )
    return encoder_config, train_config


def _cmd_train(args) -> int:
    emb = data_mod.read_embeddings(args.data)
    encoder_config, train_config = _train_from_args(emb, args)
    params, log = trainer.train(emb.data, emb.labels, encoder_config, train_config)
    enc.write_checkpoint(args.out, params)
    tsv = log.to_tsv()
    if args.log:
        data_mod.atomic_write(args.log, tsv.encode())
    if not args.quiet:
        sys.stdout.write(tsv)
    print(f"wrote model -> {args.out}")
    return 0


def _cmd_encode(args) -> int:
    params, emb = _load_model_and_data(args.model, args.data)
    db = retrieval.build_database(params, emb.data, emb.labels)
    codes_mod.write_dcod(args.out, db.packed, db.labels)
    print(f"wrote {db.count} codewords (k={db.spec.k}, d={db.spec.d}) -> {args.out}")
    return 0


def _cmd_fewshot(args) -> int:
    params, emb = _load_model_and_data(args.model, args.data)
    spec = retrieval.EpisodeSpec(
        ways=args.ways,
        shots=args.shots,
        queries_per_class=args.queries,
        episodes=args.episodes,
        seed=args.seed,
    )
    res = retrieval.fewshot_episode(params, emb.data, emb.labels, spec)
    print("ways\tshots\tepisodes\taccuracy\tci95")
    print(f"{args.ways}\t{args.shots}\t{res.episodes}\t{res.accuracy:.4f}\t{res.ci95:.4f}")
    return 0


def _cmd_retrieval(args) -> int:
    params, emb = _load_model_and_data(args.model, args.data)
    same = args.db_data is None or args.db_data == args.data
    db_emb = emb if same else data_mod.read_embeddings(args.db_data)
    db = retrieval.build_database(params, db_emb.data, db_emb.labels)
    probs = enc.encode_batch(params, emb.data)
    recall = retrieval.recall_at(db, probs, emb.labels, args.ks, exclude_self=same)
    print("k\trecall")
    for k in args.ks:
        print(f"{k}\t{recall[k]:.4f}")
    return 0


def _cmd_knn(args) -> int:
    params, emb = _load_model_and_data(args.model, args.data)
    same = args.db_data is None or args.db_data == args.data
    db_emb = emb if same else data_mod.read_embeddings(args.db_data)
    db = retrieval.build_database(params, db_emb.data, db_emb.labels)
    probs = enc.encode_batch(params, emb.data)
    acc = retrieval.knn_top1(db, probs, emb.labels, k_neighbors=args.k_neighbors,
                             exclude_self=same)
    print("k_neighbors\ttop1")
    print(f"{args.k_neighbors}\t{acc:.4f}")
    return 0


def _cmd_correlation(args) -> int:
    emb = data_mod.read_embeddings(args.data)
    encoder_config, train_config = _train_from_args(emb, args)
    _, _, checkpoints = trainer.train(
        emb.data, emb.labels, encoder_config, train_config,
        checkpoint_every=args.checkpoint_every,
    )
    matrix, series = retrieval.metric_correlation(
        checkpoints, emb.data, emb.labels, episodes=args.episodes, seed=args.seed
    )
    names = retrieval.METRIC_NAMES
    print("metric\t" + "\t".join(names))
    for i, name in enumerate(names):
        row = "\t".join("nan" if np.isnan(v) else f"{v:.4f}" for v in matrix[i])
        print(f"{name}\t{row}")
    return 0


def _compress_dimco(train_emb, eval_emb, args, same_split):
    spec = CodeSpec(k=args.k, d=args.d)
    encoder_config = enc.EncoderConfig(
        input_dim=train_emb.dim, hidden_dims=(), spec=spec,
        bottleneck=args.bottleneck, seed=args.seed,
    )
    train_config = trainer.TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed)
    params, _ = trainer.train(train_emb.data, train_emb.labels, encoder_config, train_config)
    db = retrieval.build_database(params, train_emb.data, train_emb.labels)
    probs = enc.encode_batch(params, eval_emb.data)
    acc = retrieval.knn_top1(db, probs, eval_emb.labels, k_neighbors=args.k_neighbors,
                             exclude_self=same_split)
    if args.out:
        enc.write_checkpoint(args.out, params)
    return acc, spec


def _compress_pq(train_emb, eval_emb, args, same_split):
    spec = CodeSpec(k=args.k, d=args.d)
    codebook = quantizers.pq_train(train_emb.data, spec, seed=args.seed)
    db = retrieval.database_from_codes(
        quantizers.pq_encode(codebook, train_emb.data), train_emb.labels, spec
    )
    query_codes = quantizers.pq_encode(codebook, eval_emb.data)
    acc = retrieval.knn_top1(
        db, query_codes, eval_emb.labels, k_neighbors=args.k_neighbors,
        pair_tables=quantizers.pq_pair_tables(codebook), exclude_self=same_split,
    )
    if args.out:
        quantizers.write_pq(args.out, codebook)
    return acc, spec


def _compress_sq(train_emb, eval_emb, args, same_split):
    codebook = quantizers.sq_train(train_emb.data, args.k)
    spec = codebook.spec
    db = retrieval.database_from_codes(
        quantizers.sq_encode(codebook, train_emb.data), train_emb.labels, spec
    )
    query_codes = quantizers.sq_encode(codebook, eval_emb.data)
    acc = retrieval.knn_top1(
        db, query_codes, eval_emb.labels, k_neighbors=args.k_neighbors,
        pair_tables=quantizers.sq_pair_tables(codebook), exclude_self=same_split,
    )
    if args.out:
        quantizers.write_sq(args.out, codebook)
    return acc, spec


def _cmd_compress(args) -> int:
    if args.method in ("dimco", "pq") and args.d is None:
        raise UsageError(f"--d is required for method {args.method}")
    train_emb = data_mod.read_embeddings(args.data)
    same = args.eval_data is None or args.eval_data == args.data
    eval_emb = train_emb if same else data_mod.read_embeddings(args.eval_data)
    runner = {"dimco": _compress_dimco, "pq": _compress_pq, "sq": _compress_sq}[args.method]
    acc, spec = runner(train_emb, eval_emb, args, same)
    rate = quantizers.compression_rate(train_emb.dim, 32, spec)
    print("method\tk\td\tcompression_rate\ttop1")
    print(f"{args.method}\t{spec.k}\t{spec.d}\t{rate:.2f}\t{acc:.4f}")
    return 0


def _cmd_bound(args) -> int:
    if args.support_size is not None:
        support = args.support_size
    elif args.k is not None and args.d is not None:
        support = args.k**args.d
    else:
        raise UsageError("give --support-size, or both --k and --d")
    inputs = bound_mod.BoundInputs(
        support_size=support,
        label_count=args.labels,
        sample_size=args.m,
        delta=args.delta,
        vc_dim=args.vc_dim,
        task_count=args.tasks,
    )
    value = bound_mod.lemma1_bound(inputs)
    ln2 = log(2.0)
    print("term\tnats\tbits")
    print(f"mi_deviation\t{value:.6f}\t{value / ln2:.6f}")
    if args.vc_dim is not None and args.tasks is not None:
        gap = bound_mod.theorem1_gap(inputs, c_vc=args.c_vc, c_mi=args.c_mi)
        print(f"vc_term\t{gap.vc_term:.6f}\t{gap.vc_term / ln2:.6f}")
        print(f"mi_term\t{gap.mi_term:.6f}\t{gap.mi_term / ln2:.6f}")
        print(f"count_term\t{gap.count_term:.6f}\t{gap.count_term / ln2:.6f}")
        print(f"total_gap\t{gap.total:.6f}\t{gap.total / ln2:.6f}")
    if args.verify_trials:
        rng = np.random.default_rng(args.seed)
        joint = rng.random((support, args.labels))
        joint /= joint.sum()
        rate = bound_mod.monte_carlo_verify(
            joint, args.m, args.delta, args.verify_trials, seed=args.seed
        )
        print(f"violation_rate\t{rate:.6f}\t(target <= {args.delta})")
    return 0


def _time_call(fn, repeats, *call_args):
    fn(*call_args)  # warm-up (JIT compilation for the numba path)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*call_args)
        times.append(time.perf_counter() - start)
    return min(times)


def _cmd_bench(args) -> int:
    spec = CodeSpec(k=args.k, d=args.d)
    rng = np.random.default_rng(args.seed)
    codes = rng.integers(0, spec.k, size=(args.count, spec.d), dtype=np.int64)
    packed = codes_mod.pack(codes, spec)
    logq = np.log(rng.dirichlet(np.ones(spec.k), size=spec.d))
    query = codes[0].copy()
    points = rng.normal(size=(args.count, 16))
    centroids = rng.normal(size=(spec.k, 16))

    cases = [
        ("logprob_scan", kernels.logprob_scan_np, kernels.logprob_scan_nb,
         (packed.payload, args.count, spec.d, spec.bits_per_symbol, spec.code_bytes, logq)),
        ("hamming_scan", kernels.hamming_scan_np, kernels.hamming_scan_nb,
         (packed.payload, args.count, spec.d, spec.bits_per_symbol, spec.code_bytes, query)),
        ("unpack_codes", kernels.unpack_codes_np, kernels.unpack_codes_nb,
         (packed.payload, args.count, spec.d, spec.bits_per_symbol, spec.code_bytes)),
        ("kmeans_assign", kernels.kmeans_assign_np, kernels.kmeans_assign_nb,
         (points, centroids)),
    ]
    print(f"n={args.count} k={spec.k} d={spec.d} repeats={args.repeats} "
          f"(best-of timings, numba {'on' if kernels.NUMBA_ENABLED else 'OFF'})")
    print("kernel\tnumpy_s\tnumba_s\tspeedup")
    for name, np_fn, nb_fn, call_args in cases:
        t_np = _time_call(np_fn, args.repeats, *call_args)
        if kernels.NUMBA_ENABLED:
            t_nb = _time_call(nb_fn, args.repeats, *call_args)
            print(f"{name}\t{t_np:.6f}\t{t_nb:.6f}\t{t_np / t_nb:.2f}x")
        else:
            print(f"{name}\t{t_np:.6f}\t-\t-")
    return 0


_COMMANDS = {
    "gen-synth": _cmd_gen_synth,
    "train": _cmd_train,
    "encode": _cmd_encode,
    "compress": _cmd_compress,
    "bound": _cmd_bound,
    "bench": _cmd_bench,
}

_EVAL_COMMANDS = {
    "fewshot": _cmd_fewshot,
    "retrieval": _cmd_retrieval,
    "knn": _cmd_knn,
    "correlation": _cmd_correlation,
}


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "eval":
            return _EVAL_COMMANDS[args.eval_command](args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileFormatError, ValueError, OSError, trainer.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
