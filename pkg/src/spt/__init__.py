"""Schema tokens as trainable output rows on a frozen tiny language model."""
from .errors import *  # noqa: F401,F403
from .textcore import Vocabulary, build_vocabulary, decode, encode
from .registry import SchemaDef, SchemaPool, schema_template, validate_pool
from .model import ModelConfig, ModelParams, forward, init_params, loss_and_grads, sgd_step

__version__ = "0.1.0"
