"""
Utility functions for the Active Shadowing planner
Provides common logging, error types and atomic file output
"""

import logging
import os
import tempfile
import time
from logging.handlers import RotatingFileHandler


DEFAULT_LOG_FILE = "active_shadowing.log"
LOG_FILE_ENV = "ASD_LOG_FILE"
LOG_LEVEL_ENV = "ASD_LOG_LEVEL"


class ActiveShadowingError(Exception):
    """Base error for every failure raised by the planner package"""


class InvalidLightError(ActiveShadowingError, ValueError):
    """Light direction outside 0 < alpha <= 90, 0 <= phi < 360 or non-finite"""


class InvalidPoseError(ActiveShadowingError, ValueError):
    """Gripper pose or ground point with non-finite coordinates or negative height"""


class TrajectoryError(ActiveShadowingError, ValueError):
    """Malformed trajectory, scene or time parameter"""


class InfeasibleShadowError(ActiveShadowingError):
    """A tip resting on the ground plane cannot cast a displaced shadow"""


class ObserverError(ActiveShadowingError, ValueError):
    """Invalid observer parameters or unknown goal label"""


class ScenarioError(ActiveShadowingError, ValueError):
    """Scenario file violates the schema; the message names the offending key"""


def setup_logger(name: str, log_file: str = None) -> logging.Logger:
    """
    Set up a logger with rotating file and console handlers

    The level comes from $ASD_LOG_LEVEL (INFO when unset), so loggers
    created after set_log_level still honour it.

    Args:
        name: Logger name
        log_file: Path to log file (defaults to $ASD_LOG_FILE or active_shadowing.log)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    level = configured_level()
    logger.setLevel(level)
    log_file = log_file or os.environ.get(LOG_FILE_ENV, DEFAULT_LOG_FILE)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        log_dir = os.path.dirname(log_file) if os.path.dirname(log_file) else '.'
        if not ensure_directory_exists(log_dir):
            raise OSError(f"Cannot create log directory: {log_dir}")

        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except Exception as e:
        temp_logger = logging.getLogger('temp_setup')
        temp_handler = logging.StreamHandler()
        temp_handler.setFormatter(formatter)
        temp_logger.addHandler(temp_handler)
        temp_logger.error(f"Could not create rotating file handler for {log_file}: {e}")

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger


def configured_level() -> int:
    """Logging level named by $ASD_LOG_LEVEL, INFO when unset or unknown"""
    level = logging.getLevelName(os.environ.get(LOG_LEVEL_ENV, "INFO").upper())
    return level if isinstance(level, int) else logging.INFO


def set_log_level(level: int) -> None:
    """
    Apply a level to every package logger, including ones created later

    Loggers created later pick the level up through $ASD_LOG_LEVEL.

    Args:
        level: logging level, e.g. logging.WARNING
    """
    os.environ[LOG_LEVEL_ENV] = logging.getLevelName(level)
    for name in list(logging.root.manager.loggerDict):
        logger = logging.getLogger(name)
        if logger.handlers:
            logger.setLevel(level)
            for handler in logger.handlers:
                handler.setLevel(level)


def redirect_log_file(log_file: str) -> None:
    """
    Send package logging to a different rotating log file

    Loggers created later pick the file up through $ASD_LOG_FILE.

    Args:
        log_file: New log file path
    """
    os.environ[LOG_FILE_ENV] = log_file
    log_dir = os.path.dirname(log_file) or '.'
    if not ensure_directory_exists(log_dir):
        raise OSError(f"Cannot create log directory: {log_dir}")

    for name in list(logging.root.manager.loggerDict):
        logger = logging.getLogger(name)
        rotating = [h for h in logger.handlers if isinstance(h, RotatingFileHandler)]
        if not rotating:
            continue
        for handler in rotating:
            logger.removeHandler(handler)
            handler.close()
        file_handler = RotatingFileHandler(log_file, maxBytes=10*1024*1024, backupCount=5,
                                           encoding='utf-8')
        file_handler.setLevel(rotating[0].level)
        file_handler.setFormatter(rotating[0].formatter)
        logger.addHandler(file_handler)


def log_error(logger: logging.Logger, error: Exception, context: str = "") -> None:
    """
    Log an error with context information

    Args:
        logger: Logger instance
        error: Exception to log
        context: Additional context information
    """
    error_msg = f"{context}: {str(error)}" if context else str(error)
    logger.error(error_msg, exc_info=True)


def ensure_directory_exists(directory: str) -> bool:
    """
    Ensure a directory exists, create if it doesn't

    Args:
        directory: Directory path to check/create

    Returns:
        True if directory exists or was created successfully
    """
    try:
        os.makedirs(directory, exist_ok=True)
        return True
    except Exception as e:
        logger = setup_logger(__name__)
        logger.error(f"Error creating directory {directory}: {e}")
        return False


def safe_file_operation(operation, *args, **kwargs):
    """
    Safely execute a file operation with retry logic and logging

    Args:
        operation: Function to execute
        *args: Arguments for the operation
        **kwargs: Keyword arguments for the operation

    Returns:
        Result of operation
    """
    max_retries = 3
    retry_delay = 0.1
    logger = setup_logger(__name__)

    for attempt in range(max_retries):
        try:
            return operation(*args, **kwargs)
        except (OSError, PermissionError) as e:
            if attempt == max_retries - 1:
                logger.error(f"File operation failed after {max_retries} attempts: {e}")
                raise
            logger.debug(f"File operation attempt {attempt + 1} failed: {e}, retrying...")
            time.sleep(retry_delay * (attempt + 1))

    return None


def atomic_write_text(path: str, text: str) -> str:
    """
    Write text to path via a temporary sibling file and a rename

    Parallel runs never observe a half-written file.

    Args:
        path: Destination file
        text: Full file content (written with LF line endings)

    Returns:
        The destination path
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not ensure_directory_exists(directory):
        raise OSError(f"Cannot create output directory: {directory}")

    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        safe_file_operation(os.replace, tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return path
