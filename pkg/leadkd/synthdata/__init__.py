from .synthdata import CorpusSpec, SynthCorpus, generate, make_batches
from .synthdata import read_corpus, write_corpus, read_sequences, write_sequences, SOURCES
