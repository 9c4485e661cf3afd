from .backends import HttpBackend, HttpBackendConfig, PlantedOntology, StubBackend, TextModelBackend
from .pipeline import (
    CommunitySummary,
    Explanation,
    ExtractedElements,
    PipelineResult,
    assemble_graph,
    build_graph,
    chunk_text,
    communities,
    explain_path,
    extract_elements,
    generate_explanation,
    summarize_communities,
)
from .ontology import make_planted_ontology
