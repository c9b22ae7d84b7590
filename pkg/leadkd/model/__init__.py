from .encoder import TokenSequence, EncoderStack, Linear, encode_all_layers, pad_batch
from .encoder import PAD_ID, CLS_ID, SEP_ID, FIRST_CONTENT_ID
from .retrieval_model import RetrievalModel, score_de, score_cb, score_ce, layer_score, VARIANTS
