"""
Django settings for the sred_project depth-restoration toolkit.

The project has no web surface: Django provides the settings layer, the ORM
that records training runs and evaluation reports, and the test runner.

Toolkit defaults live in ``SRED_DEFAULTS``; see ``sred_app.config`` for how a
pipeline configuration file and command-line flags are layered on top.
"""

from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (no sessions, no admin).
SECRET_KEY = config('SECRET_KEY', default='django-insecure-sred-local-key')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'sred_app',
]


# Database

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': config('SRED_DB_PATH', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ─── Toolkit configuration schema ────────────────────────────────────────────
# key: (type, default). A default of None means "absent" (auto / not given).

SRED_DEFAULTS = {
    # run
    'run.seed':                 (int, config('SRED_SEED', default=0, cast=int)),
    'run.jobs':                 (int, config('SRED_JOBS', default=1, cast=int)),
    'run.out':                  (str, config('SRED_OUT_DIR', default='out')),
    'run.plots':                (bool, False),

    # paths
    'paths.dataset':            (str, None),
    'paths.reference':          (str, None),
    'paths.targets':            (str, None),
    'paths.rig':                (str, None),
    'paths.weights':            (str, None),

    # core
    'core.max_depth_mm':        (float, config('SRED_MAX_DEPTH_MM', default=8000.0, cast=float)),

    # registration
    'registration.eps_z':       (float, 1.0),
    'registration.blur_size':   (int, 5),
    'registration.blur_passes': (int, 2),

    # inpaint
    'inpaint.radius':           (int, 5),
    'inpaint.lambda':           (float, 0.5),
    'inpaint.sigma_g':          (float, None),
    'inpaint.d0':               (float, 1.0),
    'inpaint.use_gradient':     (bool, True),

    # denoiser / training
    'train.mode':               (str, 'sred'),
    'train.batch_size':         (int, 16),
    'train.epochs':             (int, 200),
    'train.learning_rate':      (float, 1e-4),
    'train.val_split':          (float, 0.1),
    'train.test_split':         (float, 0.04),
    'train.max_steps':          (int, None),

    # noise simulation
    'noise.sigma_base':         (float, 0.5),
    'noise.q_step':             (float, 0.125),
    'noise.sigma_s':            (float, 0.5),
    'noise.theta_max_deg':      (float, 80.0),
    'noise.k_disparity':        (float, 35130.0),
    'noise.seed':               (int, None),

    # classic baselines
    'tv.weight':                (float, 0.4),
    'tv.max_iters':             (int, 200),
    'tv.tol':                   (float, 2e-4),
    'bf.sigma_s':               (float, 3.0),
    'bf.sigma_r':               (float, 0.05),
    'bf.radius':                (int, 7),
    'fmm.radius':               (int, 5),

    # metrics
    'metrics.window':           (int, 8),
    'metrics.block':            (int, 8),
    'metrics.low_quantile':     (float, 0.25),
    'metrics.high_quantile':    (float, 0.75),

    # evaluate
    'evaluate.dataset_name':    (str, 'dataset'),
    'evaluate.sred':            (str, None),
    'evaluate.n2n':             (str, None),
    'evaluate.n2stack':         (str, None),
    'evaluate.fmm_bf':          (str, None),
    'evaluate.tv':              (str, None),
    'evaluate.run_baselines':   (bool, True),
    'report.xlsx':              (bool, False),

    # bench
    'bench.frames':             (int, 100),
    'bench.resolutions':        (str, '128x128,256x256,512x512,512x424'),
}
