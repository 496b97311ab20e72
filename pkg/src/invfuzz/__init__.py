"""invfuzz: learn formal input constraints for tensor APIs and fuzz them
with solver-generated, diversity-sampled inputs."""

__version__ = "0.1.0"
