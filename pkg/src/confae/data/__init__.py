"""Synthetic confounded-image benchmarks and the dataset on-disk format."""

from confae.data.attributes import (
    AttributeSpec,
    CorrelationSpec,
    circle_attributes,
    circle_correlation,
    ellipse_attributes,
    ellipse_correlation,
)
from confae.data.dataset import (
    Dataset,
    generate_dataset,
    realized_target_confounder_corr,
)
from confae.data.render import IMAGE_SIZE, render_circle, render_ellipse
from confae.data.sampling import sample_correlated
from confae.data.store import read_dataset, write_dataset

__all__ = [
    "AttributeSpec", "CorrelationSpec", "circle_attributes", "circle_correlation",
    "ellipse_attributes", "ellipse_correlation", "Dataset", "generate_dataset",
    "realized_target_confounder_corr", "IMAGE_SIZE", "render_circle",
    "render_ellipse", "sample_correlated", "read_dataset", "write_dataset",
]
