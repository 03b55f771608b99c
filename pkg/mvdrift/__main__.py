"""Entry point of ``python -m mvdrift``."""
from .cli import main

raise SystemExit(main())
