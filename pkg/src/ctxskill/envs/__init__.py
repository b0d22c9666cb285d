from . import flappy, lander, lane

__all__ = ["flappy", "lander", "lane"]
