import logging

from colorama import Fore, Style, just_fix_windows_console


class ColoredLevelFormatter(logging.Formatter):
    """Formatter painting the level name of each record through colorama."""

    level_colors = {
        logging.DEBUG: Fore.CYAN,
        logging.INFO: Fore.GREEN,
        logging.WARNING: Fore.YELLOW,
        logging.ERROR: Fore.RED,
        logging.CRITICAL: Fore.MAGENTA + Style.BRIGHT,
    }

    def format(self, record: logging.LogRecord) -> str:
        color = self.level_colors.get(record.levelno, str())
        formatted = super().format(record)

        return formatted.replace(
            record.levelname,
            f"{color}{record.levelname}{Style.RESET_ALL}",
            1
        )


def configure_logging(level: int = logging.INFO, *, colored: bool = True) -> logging.Logger:
    """Function installing a single stream handler on the package logger."""

    just_fix_windows_console()

    package_logger = logging.getLogger("ftnlab")
    package_logger.setLevel(level)

    for handler in tuple(package_logger.handlers):
        package_logger.removeHandler(handler)

    handler = logging.StreamHandler()
    formatter_type = ColoredLevelFormatter if colored else logging.Formatter
    handler.setFormatter(formatter_type("%(levelname)s %(name)s: %(message)s"))

    package_logger.addHandler(handler)
    package_logger.propagate = False

    return package_logger


def is_progress_visible() -> bool:
    return logging.getLogger("ftnlab").isEnabledFor(logging.INFO)
