from decouple import config, Csv
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='nvlio-insecure-change-this-in-production')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'geom',
    'range_image',
    'imu',
    'registration',
    'degeneracy',
    'loop_closure',
    'pose_graph',
    'sim',
    'io_cli',
    'dashboard',
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

ROOT_URLCONF = 'nvlio.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'nvlio.wsgi.application'

# Base de datos del registro de corridas (sqlite por defecto)
DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

LANGUAGE_CODE = 'es-ar'
TIME_ZONE = 'America/Argentina/Buenos_Aires'
USE_I18N = True
USE_TZ = True

STATIC_URL = '/static/'
STATIC_ROOT = BASE_DIR / 'staticfiles'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
}

# Valores por defecto de RunConfig; cada uno se puede pisar con NVLIO_<CLAVE>
NVLIO_DEFAULTS = {
    'fov_max_deg': config('NVLIO_FOV_MAX_DEG', default=45.0, cast=float),
    'fov_min_deg': config('NVLIO_FOV_MIN_DEG', default=-45.0, cast=float),
    'image_height': config('NVLIO_IMAGE_HEIGHT', default=32, cast=int),
    'image_width': config('NVLIO_IMAGE_WIDTH', default=512, cast=int),
    'normal_window': config('NVLIO_NORMAL_WINDOW', default=3, cast=int),
    'consensus_distance': config('NVLIO_CONSENSUS_DISTANCE', default=0.05, cast=float),
    'range_jump': config('NVLIO_RANGE_JUMP', default=0.3, cast=float),
    'voxel_size': config('NVLIO_VOXEL_SIZE', default=0.4, cast=float),
    'voxel_normal_coherence': config('NVLIO_VOXEL_NORMAL_COHERENCE', default=0.0, cast=float),
    'distance_threshold': config('NVLIO_DISTANCE_THRESHOLD', default=0.5, cast=float),
    'angle_threshold_deg': config('NVLIO_ANGLE_THRESHOLD_DEG', default=30.0, cast=float),
    'max_iterations': config('NVLIO_MAX_ITERATIONS', default=30, cast=int),
    'step_tolerance': config('NVLIO_STEP_TOLERANCE', default=1e-6, cast=float),
    'min_correspondences': config('NVLIO_MIN_CORRESPONDENCES', default=20, cast=int),
    'max_candidates': config('NVLIO_MAX_CANDIDATES', default=10, cast=int),
    'submap_length': config('NVLIO_SUBMAP_LENGTH', default=5, cast=int),
    'keyframe_angle_deg': config('NVLIO_KEYFRAME_ANGLE_DEG', default=30.0, cast=float),
    'keyframe_distance': config('NVLIO_KEYFRAME_DISTANCE', default=1.0, cast=float),
    'loop_radius': config('NVLIO_LOOP_RADIUS', default=10.0, cast=float),
    'loop_exclusion': config('NVLIO_LOOP_EXCLUSION', default=10, cast=int),
    'loop_neighborhood': config('NVLIO_LOOP_NEIGHBORHOOD', default=3, cast=int),
    'loop_radial_threshold': config('NVLIO_LOOP_RADIAL_THRESHOLD', default=0.3, cast=float),
    'loop_angle_threshold_deg': config('NVLIO_LOOP_ANGLE_THRESHOLD_DEG', default=30.0, cast=float),
    'loop_min_matches': config('NVLIO_LOOP_MIN_MATCHES', default=20, cast=int),
    'lambda_threshold': config('NVLIO_LAMBDA_THRESHOLD', default=0.02, cast=float),
    'covariance_scale': config('NVLIO_COVARIANCE_SCALE', default=0.01, cast=float),
    'rotation_sigma': config('NVLIO_ROTATION_SIGMA', default=0.01, cast=float),
    'gyro_noise': config('NVLIO_GYRO_NOISE', default=1.7e-4, cast=float),
    'accel_noise': config('NVLIO_ACCEL_NOISE', default=2e-3, cast=float),
    'gyro_bias_walk': config('NVLIO_GYRO_BIAS_WALK', default=1e-5, cast=float),
    'accel_bias_walk': config('NVLIO_ACCEL_BIAS_WALK', default=1e-4, cast=float),
    'gravity_init_window': config('NVLIO_GRAVITY_INIT_WINDOW', default=1.0, cast=float),
    'extrinsic_translation': config('NVLIO_EXTRINSIC_TRANSLATION', default='0,0,0', cast=Csv(float)),
    'extrinsic_rpy_deg': config('NVLIO_EXTRINSIC_RPY_DEG', default='0,0,0', cast=Csv(float)),
    'optimizer_iterations': config('NVLIO_OPTIMIZER_ITERATIONS', default=50, cast=int),
    'deterministic': config('NVLIO_DETERMINISTIC', default=False, cast=bool),
}
