#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
initial_data_func.py

自定义初始势函数示例，在参数 data = "file" 时使用。
此文件必须包含一个名为 generate_initial_data 的函数。
"""

import numpy as np


def generate_initial_data(*mesh):
    """
    在网格上采样初始势函数 u₀。

    注意：
    1. 函数名必须是 generate_initial_data
    2. 每个空间坐标一个参数，一维时只有 x，二维时为 x, y
    3. 返回值会减去均值，再按 amplitude 标定 ‖Δu₀‖∞
    """
    total = np.zeros(np.broadcast(*mesh).shape)
    for x in mesh:
        # |sin x| 的二阶导数在零点处有跳跃
        total = total + np.abs(np.sin(x)) + 0.25 * np.cos(3 * x)
    return total
