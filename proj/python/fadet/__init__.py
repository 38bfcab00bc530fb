"""Unified face attack detection toolkit.

Thin Python surface over the C++ core: spectral utilities, the frequency
compression primitives, detection metrics, protocol splitting, synthetic data
generation, and a full training entry point.
"""

from ._core import (  # noqa: F401
    __version__,
    acer_acc,
    audit_split,
    build_split,
    classify,
    cluster_assign,
    fft2,
    ffg_identity,
    highband_fraction,
    highpass_mask,
    ifft2,
    nt_xent,
    radial_histogram,
    roc_metrics,
    synthesize,
    train_run,
    write_mirror_manifest,
    write_synthetic_manifest,
)
