import numpy as np
import pytest

from sparserec.classifiers import CrcOperator, SacrcConfig
from sparserec.cli import _parse_k_list, main
from sparserec.core import build_dictionary
from sparserec.errors import InvalidParameters
from sparserec.evaluation import build_scoreset, rank1_identification
from sparserec.fileio import load_flat_dataset, read_scores_csv
from sparserec.pca import pca_fit, transform_dataset


def run(*args):
    return main([str(a) for a in args])


def gen(out, *, classes=4, samples=5, probes=None, dim=24, subspace=3, sigma=0.1,
        seed=3, tensor=None):
    args = [
        "gen-synthetic", "--classes", classes, "--samples-per-class", samples,
        "--dim", dim, "--subspace-dim", subspace, "--noise-sigma", sigma,
        "--seed", seed, "--out", out,
    ]
    if probes is not None:
        args += ["--probes-per-class", probes]
    if tensor is not None:
        args += ["--tensor", tensor]
    assert run(*args) == 0


def test_gen_synthetic_counts_and_determinism(tmp_path):
    gen(tmp_path / "a", classes=3, samples=5, dim=20)
    enrolment = load_flat_dataset(tmp_path / "a" / "enrolment.feat")
    assert enrolment.num_samples == 15
    assert enrolment.num_classes == 3
    gen(tmp_path / "b", classes=3, samples=5, dim=20)
    assert (tmp_path / "a" / "enrolment.feat").read_bytes() == (tmp_path / "b" / "enrolment.feat").read_bytes()
    assert (tmp_path / "a" / "probes.feat").read_bytes() == (tmp_path / "b" / "probes.feat").read_bytes()


def test_flatten_tensor_file(tmp_path):
    from sparserec.fileio import load_tensor_set

    gen(tmp_path / "data", dim=24, tensor="2x3x4")
    assert run("flatten", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "flat") == 0
    flat = load_flat_dataset(tmp_path / "flat" / "features.feat")
    assert flat.dim == 24
    # flattening only relabels the layout; payload values are unchanged
    tensors = load_tensor_set(tmp_path / "data" / "enrolment.feat")
    m = tensors.tensors.shape[0]
    assert flat.features.tobytes() == tensors.tensors.reshape(m, -1).tobytes()
    assert flat.ids == tensors.ids


def test_flatten_2x2x2_gives_dim_8(tmp_path):
    from sparserec.fileio import write_tensor_features

    rng = np.random.default_rng(0)
    write_tensor_features(tmp_path / "t.feat", rng.standard_normal((3, 2, 2, 2)), [0, 1, 2],
                          ["a", "b", "c"])
    assert run("flatten", tmp_path / "t.feat", "--out", tmp_path / "flat") == 0
    assert load_flat_dataset(tmp_path / "flat" / "features.feat").dim == 8


def test_flatten_conv_layer_file_gives_dim_100352(tmp_path):
    from sparserec.fileio import write_tensor_features

    # one sample of 512 maps at 14x14, the last-convolution-layer geometry
    write_tensor_features(tmp_path / "t.feat", np.zeros((1, 512, 14, 14)), [0], ["s"])
    assert run("flatten", tmp_path / "t.feat", "--out", tmp_path / "flat") == 0
    assert load_flat_dataset(tmp_path / "flat" / "features.feat").dim == 100352


def test_flatten_rejects_truncated_file(tmp_path, capsys):
    gen(tmp_path / "data", tensor="2x3x4")
    path = tmp_path / "data" / "enrolment.feat"
    path.write_bytes(path.read_bytes()[:40])
    assert run("flatten", path, "--out", tmp_path / "flat") == 2
    err = capsys.readouterr().err
    assert "error:" in err and "byte offset" in err


def test_fit_without_pca_keeps_dimension(tmp_path):
    gen(tmp_path / "data", dim=24)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    manifest = (tmp_path / "bundle" / "manifest.txt").read_text()
    assert "pca = off" in manifest
    assert "dim_input = 24" in manifest
    from sparserec.fileio import read_dictionary

    d = read_dictionary(tmp_path / "bundle" / "dictionary.bin")
    assert d.dim == 24


def test_fit_k_too_large_fails_cleanly(tmp_path, capsys):
    gen(tmp_path / "data", classes=3, samples=4, dim=50)  # 12 samples
    code = run("fit", tmp_path / "data" / "enrolment.feat", "--pca", "1300",
               "--out", tmp_path / "bundle")
    assert code == 2
    assert "1300" in capsys.readouterr().err


def test_fit_is_deterministic(tmp_path):
    gen(tmp_path / "data", dim=30)
    for name in ("b1", "b2"):
        assert run("fit", tmp_path / "data" / "enrolment.feat", "--pca", "8",
                   "--out", tmp_path / name) == 0
    for filename in ("manifest.txt", "dictionary.bin", "pca.bin", "enrolment.feat"):
        assert (tmp_path / "b1" / filename).read_bytes() == (tmp_path / "b2" / filename).read_bytes()


def test_verify_separable_data_reports_zero_eer(tmp_path):
    gen(tmp_path / "data", classes=4, samples=6, dim=40, sigma=0.0, seed=9)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    assert run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--out", tmp_path / "ver") == 0
    kv = dict(
        line.split(" = ") for line in (tmp_path / "ver" / "report.kv").read_text().splitlines()
    )
    assert float(kv["eer"]) == 0.0
    assert float(kv["gmr_at_far_0.1"]) == 1.0
    assert float(kv["gmr_at_far_0.001"]) == 1.0
    text = (tmp_path / "ver" / "report.txt").read_text()
    assert "EER: 0.00%" in text
    assert "GMR at FAR=0.1: 100.00%" in text
    assert "GMR at FAR=0.01: 100.00%" in text
    assert "GMR at FAR=0.001: 100.00%" in text


def test_verify_echoes_resolved_config(tmp_path):
    gen(tmp_path / "data", dim=30)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--pca", "8", "--lambda", "0.05",
               "--out", tmp_path / "bundle") == 0
    assert run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--out", tmp_path / "ver") == 0
    text = (tmp_path / "ver" / "report.txt").read_text()
    assert "lambda = 0.05" in text  # bundle hyperparameters flow into the report
    assert "pca_components = 8" in text
    assert "resolved_sparsity_k = 20" in text
    kv = (tmp_path / "ver" / "report.kv").read_text()
    assert "config.lambda = 0.05" in kv


def test_verify_scores_csv_matches_library(tmp_path):
    gen(tmp_path / "data", classes=3, samples=4, dim=20, seed=21)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    assert run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--out", tmp_path / "ver") == 0
    scores = read_scores_csv(tmp_path / "ver" / "scores.csv")
    enrolment = load_flat_dataset(tmp_path / "data" / "enrolment.feat")
    probes = load_flat_dataset(tmp_path / "data" / "probes.feat")
    d = build_dictionary(enrolment)
    expected = build_scoreset(probes, d, CrcOperator(d, 0.01), SacrcConfig())
    assert scores.records == expected.records


def test_verify_pairs_protocol(tmp_path):
    gen(tmp_path / "data", classes=3, samples=4, dim=20, seed=22)
    probes = load_flat_dataset(tmp_path / "data" / "probes.feat")
    pairs = tmp_path / "pairs.csv"
    pairs.write_text(
        "probe_id,claimed_class\n"
        + "".join(f"{pid},{claim}\n" for pid in probes.ids[:3] for claim in (0, 1))
    )
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    assert run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--protocol", f"pairs:{pairs}", "--out", tmp_path / "ver") == 0
    scores = read_scores_csv(tmp_path / "ver" / "scores.csv")
    assert len(scores.records) == 6
    assert [r.probe_id for r in scores.records] == [pid for pid in probes.ids[:3] for _ in (0, 1)]


def test_identify_perfect_on_enrolment_probes(tmp_path):
    gen(tmp_path / "data", classes=3, samples=4, dim=20, seed=23)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    assert run("identify", tmp_path / "data" / "enrolment.feat", tmp_path / "bundle",
               "--classifier", "sacrc,crc,src,knn1", "--out", tmp_path / "ident") == 0
    lines = (tmp_path / "ident" / "rank1.csv").read_text().splitlines()
    assert lines[0] == "classifier,rank1_accuracy"
    assert len(lines) == 5  # one row per requested classifier
    for line in lines[1:]:
        assert float(line.split(",")[1]) == 1.0


def test_identify_matches_library_call(tmp_path):
    gen(tmp_path / "data", classes=4, samples=5, dim=24, seed=24)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--pca", "10",
               "--out", tmp_path / "bundle") == 0
    assert run("identify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--classifier", "sacrc,knn1", "--out", tmp_path / "ident") == 0
    rows = dict(
        line.split(",") for line in
        (tmp_path / "ident" / "rank1.csv").read_text().splitlines()[1:]
    )
    enrolment = load_flat_dataset(tmp_path / "data" / "enrolment.feat")
    probes = load_flat_dataset(tmp_path / "data" / "probes.feat")
    model = pca_fit(enrolment, num_components=10)
    reduced_enrol = transform_dataset(enrolment, model)
    reduced_probes = transform_dataset(probes, model)
    d = build_dictionary(reduced_enrol)
    op = CrcOperator(d, 0.01)
    expected_sacrc = rank1_identification(reduced_probes, "sacrc", dictionary=d, op=op,
                                          cfg=SacrcConfig())
    expected_knn = rank1_identification(reduced_probes, "knn1", dictionary=d,
                                        enrolment=reduced_enrol)
    assert float(rows["sacrc"]) == expected_sacrc
    assert float(rows["knn1"]) == expected_knn


def test_identify_filters_unenrolled_probe_classes(tmp_path):
    from sparserec.core import dataset_from_arrays
    from sparserec.fileio import write_flat_features

    gen(tmp_path / "data", classes=3, samples=4, dim=20, seed=31)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    probes = load_flat_dataset(tmp_path / "data" / "probes.feat")
    labels = probes.labels.copy()
    labels[0] = 99  # subject absent from the gallery
    mixed = dataset_from_arrays(probes.features, labels, probes.ids)
    write_flat_features(tmp_path / "mixed.feat", mixed)
    assert run("identify", tmp_path / "mixed.feat", tmp_path / "bundle",
               "--out", tmp_path / "ident") == 0
    text = (tmp_path / "ident" / "rank1.txt").read_text()
    assert f"probes_used = {probes.num_samples - 1}" in text
    assert "probes_dropped = 1" in text


def test_verify_single_class_has_no_impostors(tmp_path, capsys):
    gen(tmp_path / "data", classes=1, samples=4, dim=12, subspace=2, seed=32)
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--out", tmp_path / "bundle") == 0
    code = run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--out", tmp_path / "ver")
    assert code == 2
    assert "impostor" in capsys.readouterr().err


def test_sweep_two_rows(tmp_path):
    gen(tmp_path / "data", classes=4, samples=5, dim=24, seed=25)
    assert run("sweep-pcs", tmp_path / "data" / "enrolment.feat",
               tmp_path / "data" / "probes.feat", "--k-list", "4,8",
               "--out", tmp_path / "sweep") == 0
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "num_components,eer,gmr_at_far_0.1,gmr_at_far_0.01,gmr_at_far_0.001"
    assert len(lines) == 3
    assert lines[1].startswith("4,")
    assert lines[2].startswith("8,")
    echo = (tmp_path / "sweep" / "sweep.kv").read_text()
    assert "config.lambda = 0.01" in echo
    assert "config.k_list = 4,8" in echo


def test_sweep_accepts_the_full_grid():
    # the component grid 100..1500 step 100 parses into fifteen requests
    ks = _parse_k_list(",".join(str(k) for k in range(100, 1600, 100)))
    assert ks == list(range(100, 1600, 100))
    with pytest.raises(InvalidParameters):
        _parse_k_list("10,abc")


def test_generated_files_round_trip_the_generator(tmp_path):
    from sparserec.evaluation import generate_synthetic

    gen(tmp_path / "data", classes=3, samples=4, probes=2, dim=16, subspace=2, seed=41)
    enrol_file = load_flat_dataset(tmp_path / "data" / "enrolment.feat")
    probe_file = load_flat_dataset(tmp_path / "data" / "probes.feat")
    enrol, probes = generate_synthetic(3, 4, 16, 2, 0.1, seed=41, probes_per_class=2)
    assert enrol_file.features.tobytes() == enrol.features.tobytes()
    assert probe_file.features.tobytes() == probes.features.tobytes()
    assert enrol_file.ids == enrol.ids
    assert np.array_equal(probe_file.labels, probes.labels)


def test_negative_seed_rejected(tmp_path, capsys):
    code = run("gen-synthetic", "--classes", 2, "--samples-per-class", 2, "--dim", 8,
               "--subspace-dim", 2, "--seed", -5, "--out", tmp_path / "data")
    assert code == 2
    assert "seed" in capsys.readouterr().err


def test_missing_input_file_fails_cleanly(tmp_path, capsys):
    code = run("fit", tmp_path / "does-not-exist.feat", "--out", tmp_path / "bundle")
    assert code == 2
    assert "error:" in capsys.readouterr().err
    code = run("identify", tmp_path / "nope.feat", tmp_path / "no-bundle", "--out", tmp_path / "x")
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    gen(tmp_path / "data", dim=20)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lambda = 0.1\nsparisty_k = 3\n")  # typo must be fatal
    code = run("fit", tmp_path / "data" / "enrolment.feat", "--config", cfg,
               "--out", tmp_path / "bundle")
    assert code == 2
    assert "sparisty_k" in capsys.readouterr().err


def test_config_file_layering(tmp_path):
    gen(tmp_path / "data", dim=30, seed=26)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lambda = 0.5\npca = 6\nfar_targets = 0.2,0.02\n")
    assert run("fit", tmp_path / "data" / "enrolment.feat", "--config", cfg,
               "--lambda", "0.25", "--out", tmp_path / "bundle") == 0
    manifest = (tmp_path / "bundle" / "manifest.txt").read_text()
    assert "lambda = 0.25" in manifest  # CLI flag beats the config file
    assert "pca_components = 6" in manifest
    assert run("verify", tmp_path / "data" / "probes.feat", tmp_path / "bundle",
               "--config", cfg, "--out", tmp_path / "ver") == 0
    kv = (tmp_path / "ver" / "report.kv").read_text()
    assert "gmr_at_far_0.2 = " in kv and "gmr_at_far_0.02 = " in kv
    assert "gmr_at_far_0.001" not in kv
