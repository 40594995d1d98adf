from django.urls import path
from . import views

app_name = 'dashboard'

urlpatterns = [
    path('', views.runs_list, name='runs_list'),
    path('<int:run_id>/', views.run_detail, name='run_detail'),
]
