"""双调和热核与 Calabi 流数值实验核心包"""

VERSION = "0.3.0"
