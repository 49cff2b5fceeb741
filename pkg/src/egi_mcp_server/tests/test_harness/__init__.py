"""实验运行与接口测试包"""
