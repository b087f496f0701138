"""
Configuration module for the LCDA co-design toolkit.
Contains application-wide settings, paths, debug mode and the numeric
defaults every other module falls back to.
"""

import os
from pathlib import Path

# Application Information
APP_NAME = "lcda-codesign"
APP_VERSION = "1.0.0"
APP_AUTHOR = "Code4never"

# Directories
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"
PROMPTS_DIR = BASE_DIR / "prompts"
LOGS_DIR = Path(os.getenv("LCDA_LOG_DIR", str(BASE_DIR / "logs")))

LOGS_DIR.mkdir(parents=True, exist_ok=True)

# File Paths
DEFAULT_CONFIG_FILE = DATA_DIR / "run_config.json"
COLDSTART_CONFIG_FILE = DATA_DIR / "coldstart_config.json"

# Output directory layout
HISTORY_FILE_NAME = "history.jsonl"
SUMMARY_FILE_NAME = "summary.json"
TRANSCRIPT_FILE_NAME = "transcript.jsonl"
PARETO_FILE_NAME = "pareto.json"
CURVE_FILE_NAME = "curve.json"
ENUMERATION_FILE_NAME = "enumeration.json"
COLDSTART_FILE_NAME = "coldstart.json"
COMPARE_FILE_NAME = "compare.json"

# Schema versions (leading header line of every JSONL artifact)
HISTORY_SCHEMA = "lcda-history"
HISTORY_SCHEMA_VERSION = 1
TRANSCRIPT_SCHEMA = "lcda-transcript"
TRANSCRIPT_SCHEMA_VERSION = 1

# Logging Configuration
# Debug mode can be enabled via environment variable: set LCDA_DEBUG=1 (or DEBUG=1)
DEBUG_MODE = (os.getenv("LCDA_DEBUG") or os.getenv("DEBUG", "0")).lower() in ("1", "true", "yes", "on")

# Log Levels
if DEBUG_MODE:
    LOG_LEVEL = "DEBUG"
    CONSOLE_LOG_LEVEL = "DEBUG"
    FILE_LOG_LEVEL = "DEBUG"
else:
    LOG_LEVEL = "INFO"
    CONSOLE_LOG_LEVEL = "WARNING"
    FILE_LOG_LEVEL = "INFO"

# Log File Settings
LOG_FILE = LOGS_DIR / "lcda.log"
ROOT_LOGGER_NAME = "lcda"
MAX_LOG_SIZE = 5 * 1024 * 1024  # 5 MB
BACKUP_COUNT = 3  # Keep 3 backup log files

# Design space defaults
DEFAULT_CHANNEL_OPTIONS = (16, 32, 64, 128)
DEFAULT_KERNEL_OPTIONS = (1, 3, 5, 7)
# Stand-ins: the searched hardware hyperparameters are not published
DEFAULT_CROSSBAR_SIZES = (64, 128, 256)
DEFAULT_ADC_RESOLUTIONS = (4, 6, 8)
DEFAULT_DEVICE_PRECISIONS = (1, 2, 4)
ENUMERATION_CAP = 10 ** 6
KERNEL_JUMP_LIMIT = 4
CHANNEL_GROWTH_LIMIT = 4

# Backbone defaults: six conv layers, two FC layers, 1024 hidden units
DEFAULT_NUM_CONV_LAYERS = 6
DEFAULT_NUM_FC_LAYERS = 2
DEFAULT_FC_HIDDEN_SIZE = 1024
DEFAULT_INPUT_SHAPE = (32, 32, 3)
DEFAULT_NUM_CLASSES = 10
DEFAULT_POOL_AFTER = (1, 3, 5)

# Crossbar unit costs (stand-ins, order-of-magnitude only)
READ_ENERGY_PER_CELL = 0.1         # pJ
ADC_ENERGY_PER_CONVERSION = 2.0    # pJ at REFERENCE_ADC_BITS
CYCLE_TIME = 100.0                 # ns
CELL_AREA = 0.05                   # um^2
ADC_AREA = 1500.0                  # um^2 at REFERENCE_ADC_BITS
WEIGHT_BITS = 8
REFERENCE_ADC_BITS = 8
AREA_BUDGET_CROSSBAR = 128
AREA_BUDGET_FACTOR = 1.2
# Opt-in: scale ADC energy and area by 2^(adc - REFERENCE_ADC_BITS)
ADC_SCALING = False

# Device variation / training (stand-ins, no published values)
NOISE_SIGMA = 0.1
LEARNING_RATE = 0.05
BATCH_SIZE = 32
TRAIN_EPOCHS = 5
MC_SAMPLES = 20

# Synthetic dataset
SYNTHETIC_IMAGE_SIZE = 16
SYNTHETIC_NUM_CLASSES = 4
SYNTHETIC_TRAIN_PER_CLASS = 64
SYNTHETIC_TEST_PER_CLASS = 32
SYNTHETIC_PIXEL_NOISE = 0.3

# Surrogate accuracy proxy coefficients (non-physical)
SURROGATE_MAX_ACCURACY = 0.95
SURROGATE_LOG_PARAMS_MID = 13.0
SURROGATE_LOG_PARAMS_SCALE = 1.0
SURROGATE_VARIATION_PENALTY = 0.01

# Rewards
ENERGY_NORM = 8e7    # pJ
FPS_NORM = 1600.0    # frames per second
INVALID_PERFORMANCE = -1.0
PERFORMANCE_CLIP = (-1.0, 2.0)

# Search
DEFAULT_EPISODES = 20
DEFAULT_SEED = 0
DEFAULT_OPTIMIZER = "llm_full"
DEFAULT_EVALUATOR = "surrogate"
TOURNAMENT_SIZE = 5
MAX_PROPOSAL_ATTEMPTS = 3
COLDSTART_SEEDS = 20
COLDSTART_MAX_EPISODES = 3000
COLDSTART_TOLERANCE = 0.02
COMPARE_SEEDS = 5

# LLM endpoint
LLM_ENDPOINT = os.getenv("LCDA_LLM_ENDPOINT", "https://api.openai.com/v1")
LLM_MODEL = os.getenv("LCDA_LLM_MODEL", "gpt-4")
LLM_API_KEY_ENV = "LCDA_API_KEY"
LLM_TEMPERATURE = 0.0
LLM_MAX_TOKENS = 256
LLM_MAX_RETRIES = 3
LLM_BACKOFF_SECONDS = 1.0
LLM_TIMEOUT_SECONDS = 60
PROMPT_HISTORY_CAP = 50
