"""EGI 核心测试包"""
