from .kernels import backend_name  # noqa: F401
from .models import (  # noqa: F401
    ModelConfig,
    build_model,
    loss_and_metrics,
)
from .train import TrainedModel, train  # noqa: F401
