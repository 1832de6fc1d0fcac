import os

from abc import ABC, abstractmethod

from .logger import logger
from .config import NotificationServiceConfig, NtfyConfig



class NotificationService(ABC):

    def __init__(self, config: NotificationServiceConfig) -> None:
        """Initialize the notifier.

        Args:
            config: NotificationServiceConfig instance for this notifier.
        """
        filename = os.path.basename(config.path)
        self.name = os.path.splitext(filename)[0]
        self.cfg = config


    @abstractmethod
    def notify_harness_result(self, title: str, summary: str, failed: bool = False) -> None:
        """Send one harness summary line. ``failed`` marks runs that need attention."""
        ...


    @staticmethod
    @abstractmethod
    def string() -> str:
        ...



class NTFY(NotificationService):

    cfg: NtfyConfig

    def __init__(self, config: NtfyConfig) -> None:
        super().__init__(config)


    def notify_harness_result(self, title: str, summary: str, failed: bool = False) -> None:
        try:
            import requests

            headers = {
                "Title": title,
                "Markdown": "1",
                "Tags": "warning" if failed else "repeat",
                "Priority": "high" if failed else "default",
            }
            requests.post(
                url=self.cfg.URL,
                data=f"`{summary}`".encode(),
                headers=headers,
                timeout=10,
            ).raise_for_status()

        except Exception as e:
            logger.error(f"Failed to send notification to {self.cfg.URL}: {e}")


    @staticmethod
    def string() -> str:
        return "ntfy"



class NotificationServiceRegistry:

    _notification_services: dict[str, NotificationService] = {}


    @classmethod
    def load_all(cls, notifiers_dir: str) -> None:
        """Load every ``*.yml`` notifier in ``notifiers_dir``.

        A missing directory means no notifiers; invalid files are skipped
        with a warning.
        """
        if not os.path.isdir(notifiers_dir):
            logger.debug(f"No notifiers directory at {notifiers_dir}")
            return

        for filename in sorted(os.listdir(notifiers_dir)):
            if not filename.endswith(".yml"):
                continue
            try:
                path = os.path.join(notifiers_dir, filename)
                cfg = NtfyConfig.from_yaml(path)

                if cfg.TYPE != NTFY.string():
                    raise ValueError(f"Unsupported notifier type '{cfg.TYPE}' in {path}")

                cls._register(NTFY(cfg))
            except ValueError as e:
                logger.warning(e)


    @classmethod
    def _register(cls, service: NotificationService):
        if service.name in cls._notification_services:
            raise ValueError(f"Tried to register {service.name} but it already exists")

        cls._notification_services[service.name] = service


    @classmethod
    def get(cls, names: str | list[str]) -> list[NotificationService]:
        if isinstance(names, str):
            names = [names]
        return [cls._notification_services[name] for name in names if name in cls._notification_services]


    @classmethod
    def notify(cls, names: list[str], title: str, summary: str, failed: bool = False) -> None:
        """Send a harness summary to the named notifiers."""
        for notifier in cls.get(names):
            notifier.notify_harness_result(title, summary, failed)
