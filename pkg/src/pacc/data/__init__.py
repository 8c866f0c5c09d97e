"""Ingestion, pairing, normalization, splits and batching."""
from .dataset import (
    Dataset,
    FeatureStore,
    SequenceTooLong,
    build_features,
    encode_drugs,
    fit_transforms,
    make_batches,
)
from .records import (
    CellRecord,
    DataError,
    DrugRecord,
    DuplicatePair,
    MalformedTable,
    MissingPanelGene,
    MissingValue,
    PairSample,
    UnknownCellId,
    UnknownDrugId,
    build_drug_record,
    pair_samples,
    read_expression_tsv,
    read_responses_tsv,
    write_expression_tsv,
    write_responses_tsv,
)
from .splits import Fold, PlanFormatError, SplitPlan, TooFewEntities, TooFewPairs, lenient_split, strict_split
from .transforms import DegenerateRange, ExpressionTransform, LabelTransform

__all__ = [
    "CellRecord", "DataError", "Dataset", "DegenerateRange", "DrugRecord", "DuplicatePair",
    "ExpressionTransform", "FeatureStore", "Fold", "LabelTransform", "MalformedTable",
    "MissingPanelGene", "MissingValue", "PairSample", "PlanFormatError", "SequenceTooLong",
    "SplitPlan", "TooFewEntities", "TooFewPairs", "UnknownCellId", "UnknownDrugId",
    "build_drug_record", "build_features", "encode_drugs", "fit_transforms", "lenient_split",
    "make_batches", "pair_samples", "read_expression_tsv", "read_responses_tsv", "strict_split",
    "write_expression_tsv", "write_responses_tsv",
]
