"""
Wing Twin - Output Components
"""

from .artifacts import RunManifest, file_sha256, verify_manifest, write_csv, write_json, write_text
from .charts import CHART_THEME, plot_likelihood_curves, plot_mission

__all__ = [
    'RunManifest',
    'file_sha256',
    'verify_manifest',
    'write_csv',
    'write_json',
    'write_text',
    'CHART_THEME',
    'plot_likelihood_curves',
    'plot_mission',
]
