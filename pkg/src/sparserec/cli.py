"""Command-line orchestration for the recognition pipeline.

Subcommands: gen-synthetic, flatten, fit, verify, identify, sweep-pcs.
Every command is deterministic given its input files, configuration and
seed; re-runs write byte-identical outputs.  SPARSEREC_THREADS caps the
probe-scoring worker pool (results never depend on it).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .classifiers import CrcOperator, SacrcConfig
from .config import (
    CLASSIFIER_CHOICES,
    RunConfig,
    _apply_raw,
    config_echo,
    parse_pca_selection,
    parse_protocol,
    read_config_file,
)
from .core import Dataset, build_dictionary, dataset_from_arrays
from .errors import DimensionMismatch, InvalidParameters, SparserecError
from .evaluation import (
    build_scoreset,
    default_workers,
    evaluate_verification,
    generate_synthetic,
    rank1_identification,
)
from .fileio import (
    format_report_kv,
    format_report_text,
    load_flat_dataset,
    load_tensor_set,
    read_dictionary,
    read_pairs_csv,
    read_pca_model,
    write_dictionary,
    write_flat_features,
    write_pca_model,
    write_roc_csv,
    write_scores_csv,
    write_tensor_features,
)
from .pca import pca_fit, pca_sweep, transform_dataset

MANIFEST_NAME = "manifest.txt"
DICTIONARY_NAME = "dictionary.bin"
PCA_NAME = "pca.bin"
ENROLMENT_NAME = "enrolment.feat"


# ---------------------------------------------------------------------------
# configuration plumbing


def _overrides_from_args(args: argparse.Namespace) -> dict[str, str | None]:
    return {
        "lambda": getattr(args, "ridge_lambda", None),
        "sparsity_k": getattr(args, "sparsity_k", None),
        "pca": getattr(args, "pca", None),
        "classifier": getattr(args, "classifier", None),
        "protocol": getattr(args, "protocol", None),
        "seed": getattr(args, "seed", None),
    }


def _resolve_config(args: argparse.Namespace, base: dict[str, str] | None = None) -> RunConfig:
    """Layered resolution: defaults, then bundle manifest, then config file,
    then command-line flags."""
    cfg = RunConfig()
    for key, value in (base or {}).items():
        cfg = _apply_raw(cfg, key, value)
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            cfg = _apply_raw(cfg, key, value)
    for key, value in _overrides_from_args(args).items():
        if value is not None:
            cfg = _apply_raw(cfg, key, str(value))
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# model bundles


def _write_manifest(path: Path, entries: dict[str, str]) -> None:
    lines = [f"{key} = {entries[key]}" for key in sorted(entries)]
    path.write_text("\n".join(lines) + "\n")


def _read_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    return entries


def _load_bundle(bundle_dir: str):
    bundle = Path(bundle_dir)
    manifest = _read_manifest(bundle / MANIFEST_NAME)
    dictionary = read_dictionary(bundle / DICTIONARY_NAME)
    model = read_pca_model(bundle / PCA_NAME) if (bundle / PCA_NAME).exists() else None
    enrolment = load_flat_dataset(bundle / ENROLMENT_NAME)
    return dictionary, model, enrolment, manifest


def _reduce_probes(probes: Dataset, model, dictionary) -> Dataset:
    if model is not None:
        return transform_dataset(probes, model)
    if probes.dim != dictionary.dim:
        raise DimensionMismatch(
            f"probes have dim {probes.dim} but the bundle expects {dictionary.dim} (PCA off)"
        )
    return probes


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    enrolment, probes = generate_synthetic(
        num_classes=args.classes,
        samples_per_class=args.samples_per_class,
        dim=args.dim,
        subspace_dim=args.subspace_dim,
        noise_sigma=args.noise_sigma,
        seed=cfg.seed,
        probes_per_class=args.probes_per_class,
    )
    if args.tensor:
        n1, n2, n = _parse_tensor_shape(args.tensor)
        if n1 * n2 * n != args.dim:
            raise InvalidParameters(
                f"tensor shape {args.tensor} holds {n1 * n2 * n} values per sample, dim is {args.dim}"
            )
        for name, ds in (("enrolment.feat", enrolment), ("probes.feat", probes)):
            stacked = ds.features.reshape(ds.num_samples, n, n1, n2)
            write_tensor_features(out / name, stacked, ds.labels, ds.ids)
    else:
        write_flat_features(out / "enrolment.feat", enrolment)
        write_flat_features(out / "probes.feat", probes)
    print(f"wrote {out / 'enrolment.feat'} ({enrolment.num_samples} samples)")
    print(f"wrote {out / 'probes.feat'} ({probes.num_samples} samples)")
    return 0


def _parse_tensor_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise InvalidParameters(f"tensor shape must be n1xn2xn, got {text!r}")
    try:
        n1, n2, n = (int(p) for p in parts)
    except ValueError:
        raise InvalidParameters(f"tensor shape must be n1xn2xn, got {text!r}") from None
    if min(n1, n2, n) < 1:
        raise InvalidParameters(f"tensor shape dims must be positive, got {text!r}")
    return n1, n2, n


def cmd_flatten(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    tensors = load_tensor_set(args.input)
    flat = tensors.flatten()
    write_flat_features(out / "features.feat", flat)
    print(f"wrote {out / 'features.feat'} ({flat.num_samples} samples, dim {flat.dim})")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    enrolment = load_flat_dataset(args.enrolment)

    mode, param = parse_pca_selection(cfg.pca)
    if mode == "off":
        model = None
        reduced = enrolment
    elif mode == "fixed":
        model = pca_fit(enrolment, num_components=int(param))
        reduced = transform_dataset(enrolment, model)
    else:
        model = pca_fit(enrolment, retain=float(param))
        reduced = transform_dataset(enrolment, model)

    dictionary = build_dictionary(reduced)
    sacrc_cfg = SacrcConfig(cfg.ridge_lambda, cfg.sparsity_k, cfg.residual_tol)
    resolved_k = sacrc_cfg.resolve_k(dictionary.num_atoms)

    write_dictionary(out / DICTIONARY_NAME, dictionary)
    if model is not None:
        write_pca_model(out / PCA_NAME, model)
    write_flat_features(out / ENROLMENT_NAME, reduced)
    _write_manifest(
        out / MANIFEST_NAME,
        {
            "bundle_version": "1",
            "dim_input": str(enrolment.dim),
            "lambda": f"{cfg.ridge_lambda:g}",
            "num_atoms": str(dictionary.num_atoms),
            "num_classes": str(dictionary.num_classes),
            "pca": cfg.pca,
            "pca_components": str(0 if model is None else model.num_components),
            "residual_tol": f"{cfg.residual_tol:g}",
            "sparsity_k": str(resolved_k),
        },
    )
    print(
        f"wrote bundle {out} ({dictionary.num_atoms} atoms, {dictionary.num_classes} classes,"
        f" dim {dictionary.dim})"
    )
    return 0


def _bundle_base_config(manifest: dict[str, str]) -> dict[str, str]:
    return {key: manifest[key] for key in ("lambda", "sparsity_k", "residual_tol", "pca") if key in manifest}


def _scoreset_for(cfg: RunConfig, probes, dictionary, enrolment):
    sacrc_cfg = SacrcConfig(cfg.ridge_lambda, cfg.sparsity_k, cfg.residual_tol)
    op = CrcOperator(dictionary, cfg.ridge_lambda)
    proto, pairs_path = parse_protocol(cfg.protocol)
    pairs = read_pairs_csv(pairs_path) if proto == "pairs" else None
    scoreset = build_scoreset(
        probes,
        dictionary,
        op,
        sacrc_cfg,
        protocol=proto,
        pairs=pairs,
        classifier=cfg.classifier,
        enrolment=enrolment,
        workers=default_workers(),
    )
    return scoreset, op, sacrc_cfg


def cmd_verify(args: argparse.Namespace) -> int:
    dictionary, model, enrolment, manifest = _load_bundle(args.bundle)
    cfg = _resolve_config(args, base=_bundle_base_config(manifest))
    out = _out_dir(args)
    probes = _reduce_probes(load_flat_dataset(args.probes), model, dictionary)

    scoreset, _, sacrc_cfg = _scoreset_for(cfg, probes, dictionary, enrolment)
    echo = config_echo(
        cfg,
        resolved_sparsity_k=sacrc_cfg.resolve_k(dictionary.num_atoms),
        pca_components=0 if model is None else model.num_components,
        num_atoms=dictionary.num_atoms,
        num_classes=dictionary.num_classes,
    )
    report = evaluate_verification(scoreset, cfg.far_targets, echo)

    write_scores_csv(out / "scores.csv", scoreset)
    write_roc_csv(out / "roc.csv", report)
    (out / "report.txt").write_text(format_report_text(report))
    (out / "report.kv").write_text(format_report_kv(report))
    print(format_report_text(report), end="")
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    classifier_arg = args.classifier  # may be a comma list; resolved outside the config
    args.classifier = None
    dictionary, model, enrolment, manifest = _load_bundle(args.bundle)
    cfg = _resolve_config(args, base=_bundle_base_config(manifest))
    out = _out_dir(args)
    probes = _reduce_probes(load_flat_dataset(args.probes), model, dictionary)

    # Mirror the identification protocol: keep only probes whose class is enrolled.
    enrolled = probes.labels < dictionary.num_classes
    dropped = probes.num_samples - int(enrolled.sum())
    if dropped:
        if not enrolled.any():
            raise InvalidParameters("no probe belongs to an enrolled class")
        probes = dataset_from_arrays(
            probes.features[enrolled],
            probes.labels[enrolled],
            [pid for pid, keep in zip(probes.ids, enrolled) if keep],
        )

    classifiers = [c.strip() for c in (classifier_arg or cfg.classifier).split(",") if c.strip()]
    sacrc_cfg = SacrcConfig(cfg.ridge_lambda, cfg.sparsity_k, cfg.residual_tol)
    op = CrcOperator(dictionary, cfg.ridge_lambda)
    workers = default_workers()
    rows = []
    for name in classifiers:
        accuracy = rank1_identification(
            probes,
            name,
            dictionary=dictionary,
            op=op,
            cfg=sacrc_cfg,
            enrolment=enrolment,
            workers=workers,
        )
        rows.append((name, accuracy))

    echo = config_echo(
        cfg,
        resolved_sparsity_k=sacrc_cfg.resolve_k(dictionary.num_atoms),
        pca_components=0 if model is None else model.num_components,
        probes_used=probes.num_samples,
        probes_dropped=dropped,
    )
    csv_lines = ["classifier,rank1_accuracy"]
    csv_lines += [f"{name},{acc:.17g}" for name, acc in rows]
    (out / "rank1.csv").write_text("\n".join(csv_lines) + "\n")

    text_lines = ["rank-1 identification", "=====================", ""]
    text_lines += [f"{name}: {100.0 * acc:.2f}%" for name, acc in rows]
    text_lines += ["", "config", "------"]
    text_lines += [f"{key} = {value}" for key, value in echo]
    (out / "rank1.txt").write_text("\n".join(text_lines) + "\n")
    for name, acc in rows:
        print(f"{name}: {100.0 * acc:.2f}%")
    return 0


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidParameters(f"bad component list {text!r}; use comma-separated integers") from None
    if not ks:
        raise InvalidParameters("component list is empty")
    return ks


def cmd_sweep_pcs(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    enrolment = load_flat_dataset(args.enrolment)
    probes = load_flat_dataset(args.probes)
    k_values = _parse_k_list(args.k_list)

    models = pca_sweep(enrolment, k_values)
    header = ["num_components", "eer"] + [f"gmr_at_far_{t:g}" for t in cfg.far_targets]
    lines = [",".join(header)]
    for model in models:
        reduced_enrol = transform_dataset(enrolment, model)
        reduced_probes = transform_dataset(probes, model)
        dictionary = build_dictionary(reduced_enrol)
        scoreset, _, _ = _scoreset_for(cfg, reduced_probes, dictionary, reduced_enrol)
        report = evaluate_verification(scoreset, cfg.far_targets)
        row = [str(model.num_components), f"{report.eer:.17g}"]
        row += [f"{g.gmr:.17g}" for g in report.gmr_at_far]
        lines.append(",".join(row))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    echo = config_echo(cfg, k_list=",".join(str(k) for k in k_values))
    (out / "sweep.kv").write_text("".join(f"config.{k} = {v}\n" for k, v in echo))
    print(f"wrote {out / 'sweep.csv'} ({len(models)} rows)")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(parser: argparse.ArgumentParser, *, pca: bool = False) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--lambda", dest="ridge_lambda", type=float, default=None,
                        help="ridge regularizer for the collaborative solve")
    parser.add_argument("--k", dest="sparsity_k", type=int, default=None,
                        help="sparsity budget for the greedy solve")
    if pca:
        parser.add_argument("--pca", default=None, help="off, <K> or retain:<fraction>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparserec",
        description="Sparsity-augmented collaborative representation recognition toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write synthetic enrolment/probe feature files")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--samples-per-class", type=int, required=True)
    p.add_argument("--probes-per-class", type=int, default=None)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--subspace-dim", type=int, required=True)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--tensor", default=None, help="emit tensor-format files with shape n1xn2xn")
    _add_common(p)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("flatten", help="flatten an activation-tensor file into flat vectors")
    p.add_argument("input", help="tensor-format feature file")
    _add_common(p)
    p.set_defaults(func=cmd_flatten)

    p = sub.add_parser("fit", help="fit PCA + dictionary into a model bundle")
    p.add_argument("enrolment", help="flat enrolment feature file")
    _add_common(p, pca=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="score probes against a bundle and report EER/GMR/ROC")
    p.add_argument("probes", help="flat probe feature file")
    p.add_argument("bundle", help="model bundle directory from fit")
    p.add_argument("--classifier", choices=CLASSIFIER_CHOICES, default=None)
    p.add_argument("--protocol", default=None, help="all-vs-all or pairs:<file>")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("identify", help="rank-1 identification accuracy per classifier")
    p.add_argument("probes", help="flat probe feature file")
    p.add_argument("bundle", help="model bundle directory from fit")
    p.add_argument("--classifier", default=None,
                   help="comma-separated list from sacrc, crc, src, knn1 (default sacrc)")
    _add_common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("sweep-pcs", help="verification metrics across component counts")
    p.add_argument("enrolment", help="flat enrolment feature file")
    p.add_argument("probes", help="flat probe feature file")
    p.add_argument("--k-list", required=True, help="comma-separated component counts")
    p.add_argument("--classifier", choices=CLASSIFIER_CHOICES, default=None)
    p.add_argument("--protocol", default=None, help="all-vs-all or pairs:<file>")
    _add_common(p)
    p.set_defaults(func=cmd_sweep_pcs)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SparserecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
