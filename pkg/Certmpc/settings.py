"""
Django settings for Certmpc project.

Certmpc runs iterative learning MPC with a learned terminal certificate.
Numerical defaults live in the CERTMPC dict below; every entry can be
overridden from the environment (or a .env file) through python-decouple,
and per-run values come from the JSON run config validated in
Certmpc.runner.serializers.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/
"""

from pathlib import Path
import math
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='certmpc-local-development-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    # Third party apps
    'rest_framework',

    # Local apps
    'Certmpc.dynamics',
    'Certmpc.neural',
    'Certmpc.certificates',
    'Certmpc.ocp',
    'Certmpc.iterations',
    'Certmpc.baseline',
    'Certmpc.runner',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'Certmpc.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'Certmpc.wsgi.application'


# Database (iteration ledger)

if config('DATABASE_URL', default=None):
    # Use PostgreSQL when DATABASE_URL is provided
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': config('DB_NAME'),
            'USER': config('DB_USER'),
            'PASSWORD': config('DB_PASSWORD'),
            'HOST': config('DB_HOST', default='localhost'),
            'PORT': config('DB_PORT', default='5432'),
        }
    }
else:
    # Use SQLite for local runs
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
LOG_LEVEL = config('CERTMPC_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'Certmpc': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
}


# Iterative learning MPC defaults (Dubins reach-avoid benchmark)
CERTMPC = {
    # task
    'TIME_STEP': config('CERTMPC_TIME_STEP', default=0.1, cast=float),
    'HORIZON': config('CERTMPC_HORIZON', default=15, cast=int),
    'DISCOUNT': config('CERTMPC_DISCOUNT', default=0.8, cast=float),
    'LEVEL': config('CERTMPC_LEVEL', default=7.0, cast=float),
    'MAX_STEPS': config('CERTMPC_MAX_STEPS', default=120, cast=int),
    'GOAL_TOLERANCE': config('CERTMPC_GOAL_TOLERANCE', default=1e-2, cast=float),
    'COST_WEIGHT': config('CERTMPC_COST_WEIGHT', default=1e-3, cast=float),
    'GOAL': config('CERTMPC_GOAL', default='6,0,0', cast=Csv(float)),
    'START': config('CERTMPC_START', default='-6,0,0', cast=Csv(float)),
    'OBSTACLE_CENTER': config('CERTMPC_OBSTACLE_CENTER', default='0,0', cast=Csv(float)),
    'OBSTACLE_RADIUS': config('CERTMPC_OBSTACLE_RADIUS', default=1.0, cast=float),
    'INPUT_LOWER': [0.0, -math.pi / 2],
    'INPUT_UPPER': [2.0, math.pi / 2],
    'DOMAIN_LOWER': [-8.0, -8.0, -math.pi],
    'DOMAIN_UPPER': [8.0, 8.0, math.pi],
    'WHEEL_RADIUS': config('CERTMPC_WHEEL_RADIUS', default=0.035, cast=float),
    'WHEEL_BASE': config('CERTMPC_WHEEL_BASE', default=0.23, cast=float),
    'SWAP_WHEELS': config('CERTMPC_SWAP_WHEELS', default=False, cast=bool),

    # certificate training
    'TRAIN_ITERATIONS': config('CERTMPC_TRAIN_ITERATIONS', default=20000, cast=int),
    'K_VAL': config('CERTMPC_K_VAL', default=100, cast=int),
    'N_TEST': config('CERTMPC_N_TEST', default=10000, cast=int),
    'N_SAFE': config('CERTMPC_N_SAFE', default=2000, cast=int),
    'N_UNSAFE': config('CERTMPC_N_UNSAFE', default=2000, cast=int),
    'BATCH_SIZE': config('CERTMPC_BATCH_SIZE', default=512, cast=int),
    'LEARNING_RATE': config('CERTMPC_LEARNING_RATE', default=1e-3, cast=float),
    'OPTIMIZER': config('CERTMPC_OPTIMIZER', default='adam'),
    'LOSS_WEIGHTS': config('CERTMPC_LOSS_WEIGHTS', default='1,1,1,1,1', cast=Csv(float)),
    'CERTIFICATE_HIDDEN': config('CERTMPC_CERTIFICATE_HIDDEN', default='32,32', cast=Csv(int)),
    'POLICY_HIDDEN': config('CERTMPC_POLICY_HIDDEN', default='16,16', cast=Csv(int)),
    'CERTIFICATE_OUTPUT_DIM': config('CERTMPC_CERTIFICATE_OUTPUT_DIM', default=1, cast=int),
    'SAFE_SOURCE': config('CERTMPC_SAFE_SOURCE', default='alpha_shape'),
    'ALPHA_INFLATE': config('CERTMPC_ALPHA_INFLATE', default=0.25, cast=float),
    'THETA_JITTER': config('CERTMPC_THETA_JITTER', default=0.2, cast=float),
    'MAX_COUNTEREXAMPLES': config('CERTMPC_MAX_COUNTEREXAMPLES', default=1000, cast=int),

    # OCP solver
    'KKT_TOL': config('CERTMPC_KKT_TOL', default=1e-6, cast=float),
    'CONSTRAINT_TOL': config('CERTMPC_CONSTRAINT_TOL', default=1e-6, cast=float),
    'MAX_OUTER': config('CERTMPC_MAX_OUTER', default=6, cast=int),
    'MAX_INNER': config('CERTMPC_MAX_INNER', default=200, cast=int),
    'LBFGS_MEMORY': config('CERTMPC_LBFGS_MEMORY', default=10, cast=int),
    'INITIAL_PENALTY': config('CERTMPC_INITIAL_PENALTY', default=10.0, cast=float),
    'PENALTY_GROWTH': config('CERTMPC_PENALTY_GROWTH', default=10.0, cast=float),
    'OBSTACLE_MARGIN': config('CERTMPC_OBSTACLE_MARGIN', default=0.01, cast=float),
    'TERMINAL_OBSTACLE': config('CERTMPC_TERMINAL_OBSTACLE', default=False, cast=bool),
    'NORMALIZE_DISCOUNT': config('CERTMPC_NORMALIZE_DISCOUNT', default=True, cast=bool),
    'STEP_BUDGET_MS': config('CERTMPC_STEP_BUDGET_MS', default=100.0, cast=float),

    # baseline
    'BASELINE_CANDIDATES': config('CERTMPC_BASELINE_CANDIDATES', default=10, cast=int),
    'BASELINE_TERMINAL_TOL': config('CERTMPC_BASELINE_TERMINAL_TOL', default=1e-4, cast=float),

    # run
    'ITERATIONS': config('CERTMPC_ITERATIONS', default=5, cast=int),
    'SEED': config('CERTMPC_SEED', default=0, cast=int),
    'OUTPUT_DIR': config('CERTMPC_OUTPUT_DIR', default=str(BASE_DIR / 'runs' / 'latest')),
    'BEHIND_OFFSETS': config('CERTMPC_BEHIND_OFFSETS', default='0.5,1.0', cast=Csv(float)),
    'PLANT_SUBSTEPS': config('CERTMPC_PLANT_SUBSTEPS', default=1, cast=int),
    'HEATMAP_THETA': config('CERTMPC_HEATMAP_THETA', default=-math.pi / 4, cast=float),
    'HEATMAP_RESOLUTION': config('CERTMPC_HEATMAP_RESOLUTION', default=81, cast=int),
    'BOOTSTRAP_TOLERANCE': config('CERTMPC_BOOTSTRAP_TOLERANCE', default=0.01, cast=float),
    'LEDGER': config('CERTMPC_LEDGER', default=True, cast=bool),
}
