import runpy

if __name__ == "__main__":
    runpy.run_module("sofup", run_name="__main__")
