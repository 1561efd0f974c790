import logging

from spdmlr.core.config import Config

ROOT_LOGGER_NAME = "spdmlr"
HANDLER_MARKER = "_spdmlr_handler"


def configure_root_logger(config):
    """
    (Re)attach the console and optional debug file handlers to the package logger.

    Safe to call repeatedly: handlers installed by a previous call are replaced,
    so CLI flags parsed after the first logger was created still take effect.
    """
    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.setLevel(logging.DEBUG)
    root.propagate = False
    for handler in list(root.handlers):
        if getattr(handler, HANDLER_MARKER, False):
            root.removeHandler(handler)
            handler.close()
    log_console_handler = logging.StreamHandler()
    log_console_handler.setFormatter(logging.Formatter(config.get("log.console.format")))
    log_console_handler.setLevel(config.get("log.console.level"))
    setattr(log_console_handler, HANDLER_MARKER, True)
    root.addHandler(log_console_handler)
    if config.get("debug.log.enabled"):
        log_file_handler = logging.FileHandler(config.get("debug.log.filepath"), "a")
        log_file_handler.setFormatter(logging.Formatter(config.get("debug.log.format")))
        log_file_handler.setLevel(config.get("debug.log.level"))
        setattr(log_file_handler, HANDLER_MARKER, True)
        root.addHandler(log_file_handler)
    return root


class Logger:
    def __new__(cls, name, config=None):
        root = logging.getLogger(ROOT_LOGGER_NAME)
        if not any(getattr(handler, HANDLER_MARKER, False) for handler in root.handlers):
            configure_root_logger(config or Config())
        return root.getChild(name)
