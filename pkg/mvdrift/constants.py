"""
Constants used in different `mvdrift` submodules.
"""
import math

LEAKY_RELU_SLOPE = 0.01

ADAMW_LR = 1e-4
ADAMW_EPS = 1e-4
ADAMW_GAMMA = 0.9998
ADAMW_BETA1 = 0.9
ADAMW_BETA2 = 0.999
ADAMW_WEIGHT_DECAY = 0.01

EPOCHS_TIME_SERIES = 500
EPOCHS_GENERATIVE = 500
BATCH_TIME_SERIES = 10
BATCH_GENERATIVE = 200

HIDDEN_WIDTH = 128
ITO_HIDDEN_LAYERS = 8
F_HIDDEN_LAYERS = 4
PHI_HIDDEN_LAYERS = 4
MEAN_FIELD_WIDTH = 128
ML_SAMPLE_COUNT = 32

FLOW_LAYERS = 4
FLOW_HIDDEN_LAYERS = 2
FLOW_HIDDEN_WIDTH = 64
FLOW_SCALE_CLAMP = 10.0
FLOW_SCALE_OVERFLOW = 20.0

N_BRIDGES = 30
CC_SAMPLES = 8
CC_WEIGHT = 1.0
FP_STEPS = 20
FP_PATHS = 16

KURAMOTO_K = 2.0
FHN_A = 0.2
FHN_B = 0.8
FHN_C = 1.0
FHN_D = 0.7
FHN_LAMBDA = 0.4
FHN_I_AMPLITUDE = 0.1
FHN_I_FREQUENCY = 10.0
OPINION_THETA1 = 1.0
OPINION_THETA2 = 2.5
OU_RATES = (3.0, 2.0)
JUMP_OU_RATES = (1.0, 1.0)
JUMP_LOG_SIZE_RANGE = (2.0, 3.0)
CIRCLE_ROTATION = 2.0

# sigma, T, dt, N, d; irregular observations are opt-in through GeneratorSpec.n_irregular
SYSTEM_DEFAULTS = {
    "kuramoto": dict(sigma=1.0, T=5.0, dt=0.05, n_particles=20, dim=2),
    "fitzhugh_nagumo": dict(sigma=0.3, T=5.0, dt=0.05, n_particles=20, dim=2),
    "opinion_dynamics": dict(sigma=0.5, T=100.0, dt=1.0, n_particles=20, dim=2),
    "mean_field_atlas": dict(sigma=1.0, T=5.0, dt=0.05, n_particles=20, dim=1),
    "ou": dict(sigma=1.0, T=5.0, dt=0.05, n_particles=20, dim=2),
    "circle": dict(sigma=1.0, T=5.0, dt=0.05, n_particles=20, dim=2),
    "jump_ou": dict(sigma=1.0, T=5.0, dt=0.05, n_particles=100, dim=2),
    "eight_gaussians": dict(sigma=1.0, T=0.1, dt=0.002, n_particles=100, dim=2),
}
OBSERVATION_NOISE_LEVELS = (0.0, 0.1, 0.5, 1.0)
JUMP_COUNTS = (1, 2, 4)

EIGHT_GAUSSIAN_RADIUS = 2.0
EIGHT_GAUSSIAN_MEANS = tuple(
    (EIGHT_GAUSSIAN_RADIUS * math.cos(k * math.pi / 4), EIGHT_GAUSSIAN_RADIUS * math.sin(k * math.pi / 4))
    for k in range(8)
)

HELD_OUT_SEED_OFFSET = 10007
CSV_FLOAT_FORMAT = "%.17g"
