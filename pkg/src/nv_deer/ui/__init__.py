"""
User interface components.
"""

from .rich_ui import RichRunUI, fit_report_table

__all__ = ["RichRunUI", "fit_report_table"]
