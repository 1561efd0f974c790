# Constants used across the modules are stored here.

import os
import tempfile

# Numerical tolerances.
PD_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-12
EIGEN_GAP_TOLERANCE = 1e-8
NORMAL_NORM_TOLERANCE = 1e-12
STIEFEL_TOLERANCE = 1e-8
RETRACTION_RANK_TOLERANCE = 1e-10
MAX_MATRIX_DIM = 128

# Hyperparameter candidates for the parameterized metrics.
BETA_EPSILON = 1e-4
THETA_CANDIDATES = (0.5, 1.0, 1.5)

# Classifier kinds.
METRIC_LEM = "lem"
METRIC_LCM = "lcm"
HEAD_LOGEIG = "logeig"
HEAD_KINDS = [
    METRIC_LEM,
    METRIC_LCM,
    HEAD_LOGEIG,
]

# Optimizer rules.
RULE_PEM = "pem"
RULE_AIM = "aim"
RULE_EUCLIDEAN = "euclidean"
RULE_STIEFEL = "stiefel"
SHIFT_RULES = [
    RULE_AIM,
    RULE_PEM,
]

# Gradient checking.
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_FLOOR = 1e-6
GRADCHECK_MAX_DIM = 12

# Dataset file format.
SPDCSV_FORMAT = "spdcsv"
DATASET_FORMATS = [
    SPDCSV_FORMAT,
]
SYNTH_DATA_SOURCE = "synth"
SYNTH_MAX_RETRIES = 100

# Hyperplane cloud.
CLOUD_DEFAULT_RESOLUTION = 41
CLOUD_DEFAULT_BAND = 0.05
CLOUD_DEFAULT_EXTENT = 3.0

# Output files.
REPORT_FILENAME = "report.json"
PARAMS_FILENAME = "params.npz"

# CLI exit codes.
EXIT_SUCCESS = 0
EXIT_VALIDATION_FAILURE = 1
EXIT_NUMERICAL_ABORT = 2

# Config specific constants.
CONFIG_ENV_VAR = "SPDMLR_CONFIG"
LOG_LEVEL_ENV_VAR = "SPDMLR_LOG_LEVEL"
DEFAULT_CONFIG = {
    "metric": {
        "kind": METRIC_LEM,
        "alpha": 1.0,
        "beta": 0.0,
        "theta": 1.0,
    },
    "widths": [20, 16, 8],
    "reeig_eps": 1e-4,
    "network": {
        "final_reeig": False,
    },
    "optimizer": {
        "rule": RULE_AIM,
        "amsgrad": True,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
    },
    "lr": 1e-2,
    "batch": 30,
    "epochs": 200,
    "weight_decay": 0.0,
    "seed": 0,
    "split": {
        "train_fraction": 0.7,
    },
    "workers": 1,
    "synth": {
        "n": None,
        "classes": 3,
        "per_class": 300,
        "spread": 0.15,
        "seed": None,
    },
    "log": {
        "console": {
            "level": "error",
            "format": "%(name)s - %(levelname)s - %(message)s",
        },
    },
    "debug": {
        "log": {
            "enabled": False,
            "filepath": "%s%sspdmlr-debug.log" % (tempfile.gettempdir(), os.path.sep),
            "level": "debug",
            "format": "%(name)s - %(asctime)s - %(levelname)s - %(message)s",
        },
    },
}
