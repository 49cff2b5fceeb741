"""集合动力学测试包"""
