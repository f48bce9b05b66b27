# -*- coding: utf-8 -*-

"""测试公共夹具：把仓库根目录放进导入路径，提供小网格"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.spectral import Grid  # noqa: E402


@pytest.fixture
def grid_1d():
    return Grid(1, 32)


@pytest.fixture
def grid_2d():
    return Grid(2, 16)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """在临时目录里运行，避免在仓库根目录写出 config.toml 或 results/"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("BFLAB_OUT", raising=False)
    return tmp_path
