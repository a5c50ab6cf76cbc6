from .backbone import STRIDE, backbone_forward, global_pool, init_backbone
from .classifier import (classifier_baseline_forward, classifier_logits, classifier_loss, init_classifier,
                         scene_label)
from .detector import (NO_OBJECT_WEIGHT, DetectionSet, DetectorConfig, DetectorOutput, detection_pretrain_loss,
                       detector_forward, ffn_heads, init_detector, match_batch, matched_box_l1)
from .matching import hungarian_match, linear_assignment, match_cost
from .transformer import (TransformerConfig, encode_tokens, init_transformer, multihead_attention,
                          positional_encoding, transformer_decode, transformer_encode)
