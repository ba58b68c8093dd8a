import logging
from typing import Optional

from rich.logging import RichHandler

from src.config import settings

_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """Install a rich handler on the root logger once; later calls only change the level."""
    global _configured
    level = (level or settings.log_level).upper()
    root = logging.getLogger()
    if not _configured:
        handler = RichHandler(rich_tracebacks=True, show_path=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(handler)
        _configured = True
    root.setLevel(level)
