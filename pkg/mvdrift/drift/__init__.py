"""
Trainable drift architectures and the analytic drifts of the synthetic systems.
"""
from .models import (
    Architecture,
    DriftModel,
    ItoMlpDrift,
    EmpiricalMeasureDrift,
    ImplicitMeasureDrift,
    MarginalLawDrift,
    build_drift,
    eval_ito,
    eval_em,
    mean_field_layer,
    eval_im,
    eval_ml,
    save_drift,
    load_drift,
)
from .truth import System, TrueDrift, true_drift, atlas_gamma, opinion_kernel
