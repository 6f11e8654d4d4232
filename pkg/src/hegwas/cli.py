"""Command-line pipeline: keygen, encrypt, compute, decrypt, run-all, compare.

Each command is idempotent for a fixed seed and writes its data artifacts
deterministically; wall-clock timings and operation counts go to a separate
run_report.json since they vary between runs.  The compute command never opens
the secret key, and proves it by writing its file-access audit.
"""
from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import io as io_mod
from . import serialize
from .cache import CacheConfig, CiphertextCache
from .ckks import HeEngine
from .errors import (
    AlignmentError,
    BudgetDepletedError,
    CacheCorruptionError,
    DimensionError,
    HegwasError,
    InputError,
    MissingKeyError,
    ParameterError,
)
from .gwas import (
    GwasConfig,
    assemble_result,
    BatchOutput,
    compute_gwas_encrypted,
    decrypt_statistics,
    encrypt_gwas_inputs,
)
from .instrument import track_ops
from .keys import keygen as make_keys
from .oracle import (
    compare as oracle_compare,
    oracle_gwas_modified,
    oracle_gwas_original,
    oracle_logreg_approx,
    wald_pvalues,
)
from .params import CkksParams, security_status

SK_FILE = "sk.bin"
PK_FILE = "pk.bin"
EVK_FILE = "evk.bin"
ROTKEYS_FILE = "rotkeys.bin"
PARAMS_FILE = "params.json"


# -- small helpers -------------------------------------------------------------


def _params_from_args(args) -> CkksParams:
    fields = {}
    if getattr(args, "params_file", None):
        fields.update(CkksParams.from_json(io_mod.read_text(args.params_file)).__dict__)
    for flag, name in (("log_n", "log_n"), ("log_l", "log_l"), ("log_p", "log_p"),
                       ("log_p_small", "log_p_small"), ("sigma", "sigma"), ("h", "h")):
        val = getattr(args, flag, None)
        if val is not None:
            fields[name] = val
    if "log_n" not in fields or "log_l" not in fields:
        raise InputError("provide --params-file or at least --log-n and --log-l")
    return CkksParams(**fields)


def _load_params(keys_dir) -> CkksParams:
    return CkksParams.from_json(io_mod.read_text(Path(keys_dir) / PARAMS_FILE))


def _phase_report(outdir, phase: str, seconds: float, counter=None, extra=None):
    path = Path(outdir) / "run_report.json"
    report = {}
    if path.exists():
        report = io_mod.read_json(path)
    entry = {"seconds": round(seconds, 4)}
    if counter is not None:
        entry["op_counts"] = counter.snapshot()
    if extra:
        entry.update(extra)
    report.setdefault("phases", {})[phase] = entry
    io_mod.write_json(path, report)


def _print_op_table(counter, depth_ct=None, depth_pt=None):
    print("Homomorphic Operation         No. Operations")
    print(f"Plaintext Multiplication      {counter.pt_mults}")
    print(f"Ciphertext Multiplication     {counter.ct_mults}")
    print(f"Ciphertext Rotation           {counter.rotations}")
    if depth_ct is not None:
        print("Successive (critical path):")
        print(f"  Ciphertext-mult rescales    {depth_ct}")
        print(f"  Plaintext-mult rescales     {depth_pt}")


# -- commands -------------------------------------------------------------------


def cmd_keygen(args) -> int:
    t0 = time.time()
    params = _params_from_args(args)
    status, note = security_status(params)
    if status != "accepted":
        print(f"[security] {status}: {note}", file=sys.stderr)
    sk, pk, evk, rot = make_keys(params, args.seed)
    outdir = Path(args.outdir)
    io_mod.write_bytes(outdir / SK_FILE, serialize.secret_key_to_bytes(sk, params.log_n))
    io_mod.write_bytes(outdir / PK_FILE, serialize.public_key_to_bytes(pk, params.log_n))
    io_mod.write_bytes(outdir / EVK_FILE, serialize.evaluation_key_to_bytes(evk, params.log_n))
    io_mod.write_bytes(outdir / ROTKEYS_FILE, serialize.rotation_keys_to_bytes(rot, params.log_n))
    io_mod.write_text(outdir / PARAMS_FILE, params.to_json())
    _phase_report(outdir, "context", time.time() - t0, extra={"security": [status, note]})
    print(f"keys written to {outdir}")
    return 0


def _gwas_config_from_args(args, n: int, d: int, k: int) -> GwasConfig:
    return GwasConfig(
        n=n, d=d, k=k, kappa=args.kappa, tau=args.tau,
        inverse_iters=args.inverse_iters,
        complex_packing=not args.real_packing,
    )


def cmd_encrypt(args) -> int:
    t0 = time.time()
    pre = data_mod.preprocess(args.covariates, args.pheno, args.snps)
    preprocess_seconds = time.time() - t0

    keys_dir = Path(args.keys)
    params = _load_params(keys_dir)
    pk = serialize.public_key_from_bytes(io_mod.read_bytes(keys_dir / PK_FILE))
    ds = pre.dataset
    n, d1 = ds.X.shape
    config = _gwas_config_from_args(args, n, d1 - 1, ds.S.shape[1]).resolve(params)

    t1 = time.time()
    rng = random.Random(args.seed)
    enc = encrypt_gwas_inputs(ds, config, params, pk, rng, xtx_inv=pre.xtx_inv)
    outdir = Path(args.outdir)
    manifest = {
        "n": config.n, "d": config.d, "k": config.k, "kappa": config.kappa,
        "tau": config.tau, "inverse_iters": config.inverse_iters,
        "inverse_guess": config.inverse_guess,
        "complex_packing": config.complex_packing,
        "num_batches": config.num_batches,
        "snp_ids": pre.snp_ids,
        "sample_ids": pre.sample_ids,
        "files": {},
    }
    files = manifest["files"]

    def put(name, ct):
        io_mod.write_bytes(outdir / name, serialize.ciphertext_to_bytes(ct))
        return name

    files["x_cols"] = [put(f"x_col{j:03d}.ct", ct) for j, ct in enumerate(enc.logreg.X.cols)]
    files["xt_rows"] = [put(f"xt_row{i:03d}.ct", ct) for i, ct in enumerate(enc.logreg.Xt_rep.rows_ct)]
    files["xtx_inv_cols"] = [put(f"xtxinv_col{j:03d}.ct", ct)
                             for j, ct in enumerate(enc.logreg.XtX_inv.cols)]
    files["y"] = put("y.ct", enc.logreg.y)
    files["batches"] = [
        [put(f"s_b{batch.index:03d}_row{i:03d}.ct", ct)
         for i, ct in enumerate(batch.S_packed.rows_ct)]
        for batch in enc.batches
    ]
    io_mod.write_json(outdir / "manifest.json", manifest)
    _phase_report(outdir, "preprocess", preprocess_seconds)
    _phase_report(outdir, "encrypt", time.time() - t1,
                  extra={"snp_ciphertexts": sum(len(b) for b in files["batches"])})
    print(f"encrypted inputs written to {outdir} ({config.num_batches} batches)")
    return 0


def _load_encrypted_inputs(encdir: Path, params: CkksParams, cache: CiphertextCache | None):
    from .gwas import EncryptedGwasInputs, SnpBatch
    from .logreg import LogRegInputs
    from .matrix import CPMatrix, REPMatrix, next_pow2

    manifest = io_mod.read_json(encdir / "manifest.json")
    config = GwasConfig(
        n=manifest["n"], d=manifest["d"], k=manifest["k"], kappa=manifest["kappa"],
        tau=manifest["tau"], inverse_iters=manifest["inverse_iters"],
        inverse_guess=manifest["inverse_guess"],
        complex_packing=manifest["complex_packing"],
    ).resolve(params)

    def load(name):
        return serialize.ciphertext_from_bytes(io_mod.read_bytes(encdir / name), params)

    files = manifest["files"]
    n, d1 = manifest["n"], manifest["d"] + 1
    cs = next_pow2(n)
    x_cp = CPMatrix(cols=[load(f) for f in files["x_cols"]], rows=n, cols_logical=d1)
    xt_rep = REPMatrix(rows_ct=[load(f) for f in files["xt_rows"]], repeat=cs,
                       rows=d1, cols_logical=n)
    xtx_cp = CPMatrix(cols=[load(f) for f in files["xtx_inv_cols"]], rows=d1, cols_logical=d1)
    y_ct = load(files["y"])
    logreg = LogRegInputs(X=x_cp, Xt_rep=xt_rep, XtX_inv=xtx_cp, y=y_ct)

    batches = []
    cols = config.cols_per_batch
    for b, names in enumerate(files["batches"]):
        offset = b * config.tau
        count = min(config.tau, config.k - offset)
        width = (count + 1) // 2 if config.complex_packing else count
        rows_ct = [load(f) for f in names]
        rep = REPMatrix(rows_ct=rows_ct, repeat=cs, rows=n, cols_logical=width)
        batches.append(SnpBatch(index=b, S_packed=rep, snp_offset=offset,
                                snp_count=count, complex_packing=config.complex_packing))
    return EncryptedGwasInputs(logreg=logreg, batches=batches, config=config), manifest


def cmd_compute(args) -> int:
    t0 = time.time()
    keys_dir = Path(args.keys)
    params = _load_params(keys_dir)
    try:
        evk = serialize.evaluation_key_from_bytes(io_mod.read_bytes(keys_dir / EVK_FILE))
    except FileNotFoundError:
        raise MissingKeyError(f"evaluation key file missing: {keys_dir / EVK_FILE}") from None
    try:
        rot = serialize.rotation_keys_from_bytes(io_mod.read_bytes(keys_dir / ROTKEYS_FILE))
    except FileNotFoundError:
        needed = [1 << j for j in range((params.n // 4).bit_length())]
        raise MissingKeyError(
            f"rotation keys missing: {keys_dir / ROTKEYS_FILE}; required key set is "
            f"rotation amounts {needed} plus the conjugation key"
        ) from None

    outdir = Path(args.outdir)
    cache = None
    if args.cache_capacity:
        readers = max(1, min(2, args.threads - 2)) if args.threads else 2
        cache = CiphertextCache(
            CacheConfig(capacity=args.cache_capacity, reader_workers=readers,
                        writer_workers=1, spill_dir=args.cache_dir or outdir / "cache_spill"),
            params,
        )

    with io_mod.audit_file_access() as audit, track_ops() as counter:
        enc, manifest = _load_encrypted_inputs(Path(args.encrypted), params, cache)
        engine = HeEngine(params, evk, rot)
        outputs = compute_gwas_encrypted(engine, enc, cache=cache)
        result_files = {"batches": []}
        cts = []
        for out in outputs.batch_outputs:
            entry = {
                "num": f"num_b{out.index:03d}.ct",
                "den_even": f"den_even_b{out.index:03d}.ct",
            }
            io_mod.write_bytes(outdir / entry["num"], serialize.ciphertext_to_bytes(out.num_ct))
            io_mod.write_bytes(outdir / entry["den_even"],
                               serialize.ciphertext_to_bytes(out.den_even_ct))
            cts += [out.num_ct, out.den_even_ct]
            if out.den_odd_ct is not None:
                entry["den_odd"] = f"den_odd_b{out.index:03d}.ct"
                io_mod.write_bytes(outdir / entry["den_odd"],
                                   serialize.ciphertext_to_bytes(out.den_odd_ct))
                cts.append(out.den_odd_ct)
            result_files["batches"].append(entry)
    if cache is not None:
        cache.write_manifest()
        cache.close()

    depth_ct = max(ct.depth_ct for ct in cts)
    depth_pt = max(ct.depth_pt for ct in cts)
    sk_path = str((keys_dir / SK_FILE).resolve())
    audit_paths = [p for _, p in audit]
    compute_manifest = {
        "results": result_files,
        "source_manifest": manifest,
        "op_counts": counter.snapshot(),
        "critical_path": {"ct_rescales": depth_ct, "pt_rescales": depth_pt},
        "rotations_power_of_two": counter.all_rotations_power_of_two(),
        "file_access_audit": sorted(set(audit_paths)),
        "secret_key_accessed": sk_path in audit_paths,
    }
    io_mod.write_json(outdir / "compute_manifest.json", compute_manifest)
    _phase_report(outdir, "compute", time.time() - t0, counter=counter,
                  extra={"critical_path": compute_manifest["critical_path"]})
    _print_op_table(counter, depth_ct, depth_pt)
    if compute_manifest["secret_key_accessed"]:
        raise HegwasError("privacy violation: compute phase read the secret key")
    print(f"encrypted statistics written to {outdir}")
    return 0


def cmd_decrypt(args) -> int:
    t0 = time.time()
    keys_dir = Path(args.keys)
    params = _load_params(keys_dir)
    sk = serialize.secret_key_from_bytes(io_mod.read_bytes(keys_dir / SK_FILE))
    resdir = Path(args.results)
    compute_manifest = io_mod.read_json(resdir / "compute_manifest.json")
    manifest = compute_manifest["source_manifest"]
    config = GwasConfig(
        n=manifest["n"], d=manifest["d"], k=manifest["k"], kappa=manifest["kappa"],
        tau=manifest["tau"], inverse_iters=manifest["inverse_iters"],
        inverse_guess=manifest["inverse_guess"],
        complex_packing=manifest["complex_packing"],
    ).resolve(params)

    outputs = []
    for b, entry in enumerate(compute_manifest["results"]["batches"]):
        num = serialize.ciphertext_from_bytes(io_mod.read_bytes(resdir / entry["num"]), params)
        den_even = serialize.ciphertext_from_bytes(
            io_mod.read_bytes(resdir / entry["den_even"]), params)
        den_odd = None
        if "den_odd" in entry:
            den_odd = serialize.ciphertext_from_bytes(
                io_mod.read_bytes(resdir / entry["den_odd"]), params)
        outputs.append(BatchOutput(index=b, num_ct=num, den_even_ct=den_even,
                                   den_odd_ct=den_odd))
    num, den = decrypt_statistics(outputs, config, params, sk)
    result = assemble_result(num, den)

    outdir = Path(args.outdir)
    snp_ids = manifest["snp_ids"]
    io_mod.write_tsv(
        outdir / "results.tsv",
        ["snp_id", "numerator", "denominator", "beta", "stderr", "pvalue"],
        [
            (snp_ids[i], result.numerator[i], result.denominator[i],
             result.effects[i], result.std_err[i], result.p_values[i])
            for i in range(config.k)
        ],
    )
    _phase_report(outdir, "decrypt", time.time() - t0)
    print(f"results written to {outdir / 'results.tsv'}")
    return 0


def _write_accuracy_reports(outdir: Path, label: str, reference, test, thresholds,
                            ref_p=None, test_p=None):
    rep = oracle_compare(reference, test, thresholds)
    io_mod.write_text(outdir / f"accuracy_beta_vs_{label}.tsv", rep.to_tsv())
    io_mod.write_tsv(outdir / f"scatter_beta_vs_{label}.tsv", ["reference", "test"],
                     rep.scatter)
    summary = [f"== encrypted effects vs {label} oracle ==", rep.summary_text()]
    if ref_p is not None:
        rep_p = oracle_compare(ref_p, test_p, thresholds)
        io_mod.write_text(outdir / f"accuracy_pvalue_vs_{label}.tsv", rep_p.to_tsv())
        summary += [f"== encrypted p-values vs {label} oracle ==", rep_p.summary_text()]
    return rep, "\n".join(summary)


def cmd_run_all(args) -> int:
    outdir = Path(args.outdir)
    keys_dir = outdir / "keys"
    enc_dir = outdir / "encrypted"
    res_dir = outdir / "computed"

    ns = argparse.Namespace(**vars(args))
    ns.outdir = keys_dir
    cmd_keygen(ns)

    ns = argparse.Namespace(**vars(args))
    ns.keys, ns.outdir = keys_dir, enc_dir
    cmd_encrypt(ns)

    ns = argparse.Namespace(**vars(args))
    ns.keys, ns.encrypted, ns.outdir = keys_dir, enc_dir, res_dir
    cmd_compute(ns)

    ns = argparse.Namespace(**vars(args))
    ns.keys, ns.results, ns.outdir = keys_dir, res_dir, outdir
    cmd_decrypt(ns)

    # Cleartext references for both accuracy baselines.
    pre = data_mod.preprocess(args.covariates, args.pheno, args.snps)
    ds = pre.dataset
    kappa = args.kappa
    beta, probs, _ = oracle_logreg_approx(ds.X, ds.y, kappa, return_state=True)
    b_mod, err_mod = oracle_gwas_modified(ds, beta, probs)
    b_orig, err_orig = oracle_gwas_original(ds, beta, probs)
    den_mod = np.where(np.isfinite(err_mod) & (err_mod > 0), 1.0 / err_mod**2, np.nan)
    den_orig = np.where(np.isfinite(err_orig) & (err_orig > 0), 1.0 / err_orig**2, np.nan)
    io_mod.write_tsv(outdir / "oracle_modified.tsv", ["snp_id", "beta", "stderr", "pvalue"],
                     [(pre.snp_ids[i], b_mod[i], err_mod[i],
                       wald_pvalues(b_mod, den_mod)[i]) for i in range(len(b_mod))])
    io_mod.write_tsv(outdir / "oracle_original.tsv", ["snp_id", "beta", "stderr", "pvalue"],
                     [(pre.snp_ids[i], b_orig[i], err_orig[i],
                       wald_pvalues(b_orig, den_orig)[i]) for i in range(len(b_orig))])

    header, rows = io_mod.read_tsv(outdir / "results.tsv")
    beta_idx, p_idx = header.index("beta"), header.index("pvalue")
    test_beta = np.array([float(r[beta_idx]) for r in rows])
    test_p = np.array([float(r[p_idx]) for r in rows])
    thresholds = tuple(float(t) for t in args.thresholds.split(","))

    _, text_mod = _write_accuracy_reports(
        outdir, "modified", b_mod, test_beta, thresholds,
        wald_pvalues(b_mod, den_mod), test_p)
    _, text_orig = _write_accuracy_reports(
        outdir, "original", b_orig, test_beta, thresholds,
        wald_pvalues(b_orig, den_orig), test_p)
    io_mod.write_text(outdir / "summary.txt", text_mod + "\n" + text_orig + "\n")
    print((outdir / "summary.txt").read_text())
    return 0


def cmd_compare(args) -> int:
    def read_column(path, column):
        header, rows = io_mod.read_tsv(path)
        if column not in header:
            raise InputError(f"{path}: no column {column!r} (have {header})")
        idx = header.index(column)
        return np.array([float(r[idx]) for r in rows])

    reference = read_column(args.reference, args.column)
    test = read_column(args.test, args.column)
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    rep = oracle_compare(reference, test, thresholds)
    outdir = Path(args.outdir)
    io_mod.write_text(outdir / "accuracy.tsv", rep.to_tsv())
    io_mod.write_tsv(outdir / "scatter.tsv", ["reference", "test"], rep.scatter)
    io_mod.write_text(outdir / "summary.txt", rep.summary_text())
    print(rep.summary_text())
    return 0


# -- argument wiring ---------------------------------------------------------------


def _add_param_flags(sp):
    sp.add_argument("--params-file", help="JSON file with CkksParams fields")
    sp.add_argument("--log-n", type=int)
    sp.add_argument("--log-l", type=int)
    sp.add_argument("--log-p", type=int)
    sp.add_argument("--log-p-small", type=int, dest="log_p_small")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--h", type=int)


def _add_gwas_flags(sp):
    sp.add_argument("--kappa", type=int, default=3)
    sp.add_argument("--tau", type=int, default=None,
                    help="SNPs per batch (default: packing capacity)")
    sp.add_argument("--inverse-iters", type=int, default=3, dest="inverse_iters")
    sp.add_argument("--real-packing", action="store_true",
                    help="disable complex SNP pairing")


def _add_input_flags(sp):
    sp.add_argument("--covariates", required=True)
    sp.add_argument("--pheno", required=True)
    sp.add_argument("--snps", required=True)


def _add_cache_flags(sp):
    sp.add_argument("--cache-capacity", type=int, default=0,
                    help="max resident SNP ciphertexts (0 disables the cache)")
    sp.add_argument("--cache-dir", default=None)
    sp.add_argument("--threads", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hegwas",
        description="Encrypted semi-parallel association pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("keygen", help="generate key material")
    _add_param_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("encrypt", help="preprocess CSVs and encrypt inputs")
    _add_input_flags(sp)
    _add_gwas_flags(sp)
    sp.add_argument("--keys", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_encrypt)

    sp = sub.add_parser("compute", help="run the encrypted pipeline (no secret key)")
    sp.add_argument("--encrypted", required=True)
    sp.add_argument("--keys", required=True)
    _add_cache_flags(sp)
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_compute)

    sp = sub.add_parser("decrypt", help="decrypt statistics and export results.tsv")
    sp.add_argument("--results", required=True)
    sp.add_argument("--keys", required=True)
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_decrypt)

    sp = sub.add_parser("run-all", help="all phases plus oracle accuracy reports")
    _add_input_flags(sp)
    _add_param_flags(sp)
    _add_gwas_flags(sp)
    _add_cache_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--thresholds", default="0.1,0.01,0.005")
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_run_all)

    sp = sub.add_parser("compare", help="accuracy report between two result TSVs")
    sp.add_argument("--reference", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--column", default="beta")
    sp.add_argument("--thresholds", default="0.1,0.01,0.005")
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParameterError, DimensionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (BudgetDepletedError, AlignmentError, MissingKeyError) as exc:
        print(f"crypto error: {exc}", file=sys.stderr)
        return 2
    except CacheCorruptionError as exc:
        print(f"cache corruption: {exc}", file=sys.stderr)
        return 3
    except HegwasError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
