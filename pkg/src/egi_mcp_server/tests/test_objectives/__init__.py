"""势函数测试包"""
