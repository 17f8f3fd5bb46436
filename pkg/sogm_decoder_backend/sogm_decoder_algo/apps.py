from django.apps import AppConfig


class SogmDecoderAlgoConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "sogm_decoder_algo"
    verbose_name = "Semantic grid path decoding"
