"""Stateful defense models: extractors, query stores, similarity and actions."""

from .extractors import (
    FINGERPRINT_SIZE,
    BitSignature,
    Embedding,
    Fingerprint,
    ModelEncoder,
    PihaHash,
    PixelHash,
    RandomProjectionEncoder,
    default_window,
    encode,
    lbp_codes,
    luminance,
    piha_hash,
    pixel_hash,
    quantize,
)
from .sdm import (
    SDM_DEFAULTS,
    ActionKind,
    Metric,
    SdmEnsemble,
    SdmInstance,
    SimilarityProcedure,
    build_sdm,
    ensemble_query,
    model_answer,
    reset_store,
    sdm_query,
    similarity_score,
)
from .store import QueryStore, StoreScope
