from .retrieval import FlatIndex, search_top_k, build_index, retrieve, mine_hard_negatives, rerank, evaluate_model
from .retrieval import write_negatives, read_negatives
from .metrics import mrr_at_k, recall_at_k, map_at_k, ndcg_at_k, evaluate_run
from .trec import RunRecord, Qrels, read_qrels, write_qrels, read_run, write_run, ranked_ids
