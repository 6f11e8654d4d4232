"""hegwas: leveled approximate HE with encrypted-matrix algebra and a
semi-parallel association pipeline, plus cleartext oracles for accuracy work."""

from .params import CkksParams, security_status
from .errors import (
    AlignmentError,
    BudgetDepletedError,
    CacheCorruptionError,
    CacheError,
    DimensionError,
    HegwasError,
    InputError,
    MissingKeyError,
    ParameterError,
    SerializationError,
)
from .encoding import Plaintext, decode, encode, encode_constant
from .keys import EvaluationKey, PublicKey, RotationKeySet, SecretKey, keygen
from .ckks import (
    Ciphertext,
    HeEngine,
    add,
    add_plain,
    conjugate,
    decrypt,
    decrypt_values,
    encrypt,
    encrypt_values,
    mod_down,
    mult,
    mult_integer,
    mult_plain,
    negate,
    rescale,
    rotate,
    sub,
    sub_plain,
)
from .instrument import OpCounter, track_ops
from .matrix import (
    CCPMatrix,
    CPMatrix,
    REPMatrix,
    RPMatrix,
    ccp_to_cp,
    col_sum,
    cp_matmul,
    cp_matvec,
    cp_rep_matmul,
    dot_prod,
    duplicate,
    pack_ccp,
    pack_cp,
    pack_rep,
    pack_rp,
    replicate,
    rp_matvec,
    unpack_ccp,
    unpack_cp,
    unpack_rep,
    unpack_rp,
)
from .logreg import LogRegInputs, LogRegState, hom_logreg, sigmoid7
from .gwas import (
    GwasConfig,
    GwasIntermediate,
    GwasResult,
    KeyMaterial,
    SnpBatch,
    batch_statistics,
    compute_M,
    compute_gwas_encrypted,
    compute_z,
    default_tau,
    encrypt_gwas_inputs,
    inverse_slots,
    orthogonalize_snps,
    orthogonalize_z,
    run_gwas,
)
from .cache import CacheConfig, CacheHandle, CacheStats, CiphertextCache
from .oracle import (
    AccuracyReport,
    CleartextDataset,
    compare,
    oracle_gwas_modified,
    oracle_gwas_original,
    oracle_logreg_approx,
    oracle_logreg_exact,
    sigma7,
    synth_dataset,
    synth_tables,
    wald_pvalues,
)

__version__ = "0.1.0"
