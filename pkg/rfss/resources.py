import os


def get_packaged_install_config_path(rel_install_config_path):
    return os.path.join(os.path.dirname(__file__), 'install_resources', rel_install_config_path)


def get_default_run_config_path():
    return get_packaged_install_config_path('default-run-config.json')


def get_templates_dir():
    return os.path.join(os.path.dirname(__file__), 'templates')
