import os
from dotenv import load_dotenv

# Load environment variables from a .env file (if using)
load_dotenv()

# Function to get config from environment variables with a typed default
def get_config(key, default=None, cast=str):
    value = os.getenv(key)
    if value is None or value == "":
        return default
    try:
        return cast(value)
    except ValueError:
        raise ValueError(f"Invalid value for {key}: {value!r}")


# Logging
LOG_LEVEL = get_config("DESPECKLE_LOG_LEVEL", "INFO").upper()

# Worker threads for batch despeckling (1 keeps timings reproducible)
THREADS = get_config("DESPECKLE_THREADS", 1, int)

# Largest system the dense Cholesky oracle accepts
DENSE_SOLVE_CAP = get_config("DESPECKLE_DENSE_SOLVE_CAP", 4096, int)

# PCG recomputes the true residual every this many iterations
RESIDUAL_REPLACEMENT_INTERVAL = get_config("DESPECKLE_RESIDUAL_REPLACEMENT", 50, int)

# Shifted IC(0) retries before giving up
IC_MAX_RETRIES = get_config("DESPECKLE_IC_MAX_RETRIES", 20, int)
