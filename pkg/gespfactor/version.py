"""Single source of truth for gespfactor version display."""

APP_NAME = "gespfactor"
APP_VERSION = "1.0.0"
APP_DISPLAY_VERSION = f"{APP_NAME} v{APP_VERSION}"
