from loguru import logger as log
import datetime
import os


LOG_DIR_ENV = "STOCHPROBE_LOG_DIR"


class logger:
    _initialized = False
    _debug = False

    def __init__(self, component: str = "stochprobe"):
        if not logger._initialized:
            # stderr处理器loguru默认已有，这里只补文件处理器；环境变量为空串时不落盘
            log_dir = os.environ.get(LOG_DIR_ENV, "log")
            if log_dir:
                log.add(os.path.join(log_dir, f"{datetime.datetime.now().strftime('%Y-%m-%d')}.log"))
            logger._initialized = True
        self.component = component
        self._log = log.bind(component=component)

    def enable_debug(self):
        logger._debug = True

    def disable_debug(self):
        logger._debug = False

    @property
    def is_debug(self) -> bool:
        return logger._debug

    def debug(self, msg, *args, **kwargs):
        if logger._debug:
            self._log.opt(depth=1).debug(msg, *args, **kwargs)

    def info(self, msg, *args, **kwargs):
        self._log.opt(depth=1).info(msg, *args, **kwargs)

    def warning(self, msg, *args, **kwargs):
        self._log.opt(depth=1).warning(msg, *args, **kwargs)

    def error(self, msg, *args, **kwargs):
        self._log.opt(depth=1).error(msg, *args, **kwargs)

    def critical(self, msg, *args, **kwargs):
        self._log.opt(depth=1).critical(msg, *args, **kwargs)
