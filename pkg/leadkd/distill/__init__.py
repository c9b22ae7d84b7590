from .distill import TrainExample, LayerFeature, LayerSelection, DistillConfig, LossBreakdown
from .distill import layer_feature, batch_features, select_layers, selection_count, parse_strategy
from .distill import layer_weights, layer_loss, response_loss, hard_loss, total_loss, method_loss
from .distill import response_distillation_loss, feature_distillation_loss, student_only_loss
from .distill import STRATEGIES, METHODS
from .trainer import AdamW, Trainer, LossTrace, TraceRow, train_step
